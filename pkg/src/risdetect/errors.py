"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value or config file entry is invalid."""


class ContractError(ValueError):
    """An operation was called outside its documented contract."""


class FormatError(ValueError):
    """A binary artifact file is malformed or inconsistent."""


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss or gradient."""
