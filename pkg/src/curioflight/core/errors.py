from __future__ import annotations


class CurioflightError(Exception):
    """Base exception for all curioflight errors."""



class ConfigError(CurioflightError):
    """Invalid configuration error."""



class SimulationError(CurioflightError):
    """Non-finite physics state."""

    def __init__(self, field: str, detail: str = "") -> None:
        self.field = field
        message = f"Non-finite value in rigid-body field '{field}'"
        super().__init__(f"{message}: {detail}" if detail else message)



class EnvStateError(CurioflightError):
    """Environment used out of order (step before reset, step after terminal)."""



class NumericalError(CurioflightError):
    """Non-finite activations, gradients or losses."""



class ShapeError(CurioflightError):
    """Tensor shapes disagree (optimizer state, checkpoints, configs)."""



class CheckpointError(CurioflightError):
    """Missing or malformed checkpoint."""



class TrainingError(CurioflightError):
    """A training batch failed; carries where it failed and what was saved."""

    def __init__(self, batch: int, cause: Exception, checkpoint: str | None = None) -> None:
        self.batch = batch
        self.cause = cause
        self.checkpoint = checkpoint
        message = f"Training aborted at batch {batch}: {cause}"
        if checkpoint:
            message += f" (checkpoint saved to {checkpoint})"
        super().__init__(message)
