"""
Exception types shared by the simulation modules
"""


class FdiaError(Exception):
    """Base class for every error raised by this package"""


class ConfigurationError(FdiaError, ValueError):
    """Bad dimensions, parameters out of range, or an infeasible attack schedule"""


class ScenarioError(ConfigurationError):
    """
    A scenario file that failed to parse or validate.

    All violations are collected before raising so the caller sees the full list.
    """

    def __init__(self, violations, source=None):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        self.source = source
        header = f"Scenario {source} rejected" if source else "Scenario rejected"
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{header} ({len(self.violations)} problem(s)):\n{lines}")


class SamplingError(FdiaError, RuntimeError):
    """The truncated Gaussian sampler could not produce a sample within its bound"""


class SynthesisError(FdiaError, RuntimeError):
    """The Riccati recursion for a sensor's gain diverged"""

    def __init__(self, sensor_id, message):
        self.sensor_id = sensor_id
        super().__init__(f"Sensor {sensor_id}: {message}")


class ProtocolError(FdiaError, KeyError):
    """A neighbor payload or mask entry is missing or unexpected"""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InvariantViolation(FdiaError, AssertionError):
    """An internal invariant failed; this points to a bug rather than bad input"""


class StabilityError(FdiaError, RuntimeError):
    """The augmented error matrix is not Schur stable, so the run would be meaningless"""
