"""Exception hierarchy shared by the library and the command line."""


class CutlabError(Exception):
    """Base class."""


class ModelError(CutlabError):
    """The request makes no sense for this environment (e.g. a recurrent census)."""


class RecurrentEnvironment(ModelError):
    pass


class CapError(CutlabError):
    """A numeric or step cap was hit before the result was complete."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
