"""Closed-form fields, scenarios and parameter studies."""
