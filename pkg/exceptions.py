class CollatzArtifactError(Exception):
    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class UsageError(CollatzArtifactError):
    exit_code = 2


class PreconditionError(CollatzArtifactError):
    exit_code = 3


class NotTwoAdicIntegerError(PreconditionError):
    def __init__(self, value):
        super().__init__(f"{value} is not a 2-adic integer (even denominator)")
        self.value = value


class InvalidParamsError(PreconditionError):
    pass


class PrecisionError(PreconditionError):
    pass
