"""Exception types shared across the package.

The CLI and the HTTP service map these onto exit codes / status codes:
``InputError`` (and plain ``ValueError`` / ``OSError``) mean the caller
handed us something unusable; ``NumericalError`` means the computation
itself degenerated.
"""


class InputError(ValueError):
    """Malformed file, bad configuration value, or violated precondition."""


class NoParallaxError(InputError):
    """Epipolar geometry is degenerate: depth changes do not move the pixel."""


class NumericalError(RuntimeError):
    """A computation produced an unusable result (e.g. a mostly-invalid stage)."""
