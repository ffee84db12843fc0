"""Configuration parsing, output writers and the command line."""
