"""Exception types shared across the engine."""


class HusformerError(RuntimeError):
    """Base class for every error raised by this package."""


class DimensionError(HusformerError):
    """Tensor shapes are incompatible for an operation."""


class ConfigError(HusformerError):
    """A configuration value is missing, unknown or out of range."""


class DataError(HusformerError):
    """A sample or label does not match the dataset's modality specs."""


class DatasetFormatError(HusformerError):
    """Malformed bytes in a dataset or checkpoint file."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.message = message
        self.offset = offset

    def __reduce__(self):
        return type(self), (self.message, self.offset)


class EvaluationError(HusformerError):
    """A function under gradient check produced a non-finite value."""


class TrainingError(HusformerError):
    """Training hit a non-finite loss."""

    def __init__(self, message: str, step: int, loss: float, fold: int | None = None):
        where = f"step {step}" if fold is None else f"fold {fold}, step {step}"
        super().__init__(f"{message} ({where}, loss={loss!r})")
        self.message = message
        self.step = step
        self.loss = loss
        self.fold = fold

    def __reduce__(self):
        return type(self), (self.message, self.step, self.loss, self.fold)
