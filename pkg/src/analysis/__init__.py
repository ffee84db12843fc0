"""Energy diagnostics, the generator pencil and verification suites."""
