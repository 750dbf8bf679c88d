"""Harness that runs a script-dialect rule as an isolated subprocess."""

from ruleshim.harness import EXIT_OK, EXIT_RUNTIME, EXIT_SYNTAX, main

__all__ = ["EXIT_OK", "EXIT_RUNTIME", "EXIT_SYNTAX", "main"]
