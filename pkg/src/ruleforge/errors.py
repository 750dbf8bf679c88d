"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: DataError -> 2, GatewayError -> 3,
SandboxError -> 4.
"""

from __future__ import annotations


class RuleforgeError(Exception):
    """Base class for all errors raised by this package."""


class DataError(RuleforgeError):
    """Malformed or inconsistent input data (CSV parse errors, bad labels,
    length mismatches, invalid configuration values)."""


class ParseError(DataError):
    """A file could not be parsed; message names the file and line."""


class RegistryError(DataError):
    """Rule registry problems: id collisions, missing rules."""


class GatewayError(RuleforgeError):
    """LLM gateway failures: exhausted retries, bad endpoint config."""


class MockScriptError(GatewayError):
    """Mock replay underrun/overrun; a test-harness error, always loud."""


class ExtractionError(GatewayError):
    """No code block could be extracted from a model response."""


class TemplateError(GatewayError):
    """A prompt template field was missing; message names the field."""


class TrainingError(RuleforgeError):
    """A training procedure could not produce any usable result (for
    example, every proposal failed during chunk-size calibration)."""


class SandboxError(RuleforgeError):
    """Sandbox-side failures that are not the rule's fault."""


class SandboxUnavailableError(SandboxError):
    """No sandbox is configured or its executable cannot be found."""
