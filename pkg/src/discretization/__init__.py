"""Structured grids, Lagrange spaces and block assembly."""
