"""Exception raised throughout the package."""


class NoisyISError(ValueError):
    """Invalid input or numerical failure.

    Messages are prefixed with the module that raised them, e.g.
    ``"proposals: shape has zero mass on [0, 1]"``, so the CLI can report
    them as a single diagnostic line.
    """
