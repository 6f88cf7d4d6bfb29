"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists every offending field."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


class CheckpointError(ValueError):
    """Corrupt or mismatched checkpoint file."""


class NumericalError(RuntimeError):
    """Non-finite values or a failed numerical procedure."""


class TrainingDiverged(NumericalError):
    """Training loss exceeded the divergence guard."""

    def __init__(self, step, value):
        self.step = step
        self.value = value
        super().__init__(f"training diverged at step {step}: loss {value:.6g}")


class IntegrationError(NumericalError):
    """ODE/SDE integration failed."""
