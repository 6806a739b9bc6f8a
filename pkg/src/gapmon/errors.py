"""Exception hierarchy shared by every gapmon module.

The CLI maps these onto exit codes, so each class carries one.
"""


class GapmonError(Exception):
    exit_code = 5


class InvalidModel(GapmonError):
    """A model component violates one of its invariants.

    ``locator`` is a path-like pointer at the first violated constraint,
    e.g. ``"hmm.A.row[2]"``.
    """

    exit_code = 2

    def __init__(self, locator, message=""):
        self.locator = locator
        self.message = message
        super().__init__(f"{locator}: {message}" if message else locator)


class ParseError(GapmonError):
    exit_code = 2

    def __init__(self, message, line=None, column=None, source=None):
        self.line = line
        self.column = column
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
            if column is not None:
                where += f"{column}:"
        super().__init__(f"{where} {message}" if where else message)


class InvalidArgument(GapmonError, ValueError):
    exit_code = 2


class UnknownLabel(GapmonError, KeyError):
    exit_code = 2

    def __str__(self):
        return Exception.__str__(self)


class DigestMismatch(GapmonError):
    exit_code = 2


class ImpossibleObservation(GapmonError):
    """The model assigns probability zero to an observed item."""

    exit_code = 3


class DegenerateInput(GapmonError):
    exit_code = 2


class TableLimitExceeded(GapmonError):
    exit_code = 4

    def __init__(self, max_nodes):
        self.max_nodes = max_nodes
        super().__init__(
            f"belief-graph unfolding needs more than {max_nodes} nodes; "
            "retry with a larger epsilon or use the exact estimator"
        )


class BudgetExceeded(GapmonError):
    exit_code = 4

    def __init__(self, needed, budget):
        self.needed = needed
        self.budget = budget
        super().__init__(f"oracle needs {needed} enumerations, budget is {budget}")
