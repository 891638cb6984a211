"""Exception types shared across the package."""


class ErgomixError(Exception):
    pass


class ConfigError(ErgomixError, ValueError):
    """Invalid configuration. `violations` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnsupportedOperationError(ErgomixError):
    pass


class NotConfiguredError(ErgomixError):
    pass


class BoundUnavailableError(ErgomixError):
    pass


class InsufficientSamplesError(ErgomixError, ValueError):
    pass


class DivergedStateError(ErgomixError, FloatingPointError):
    """A trajectory left the finite/guarded region."""

    def __init__(self, message, step=None, stream=None):
        self.step = step
        self.stream = stream
        where = []
        if stream is not None:
            where.append(f"stream={stream}")
        if step is not None:
            where.append(f"step={step}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
