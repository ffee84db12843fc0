"""Monolithic theta-scheme time stepping and saddle-point solves."""
