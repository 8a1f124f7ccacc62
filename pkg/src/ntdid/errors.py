"""Typed exceptions shared across the package."""


class NtdidError(Exception):
    """Base class for all package errors."""


class MissingColumn(NtdidError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"required column missing: {column!r}")


class ParseError(NtdidError):
    def __init__(self, row, column, value=None):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"unparseable value in row {row}, column {column!r}: {value!r}")


class DuplicateUnitAge(NtdidError):
    def __init__(self, unit_id, age):
        self.unit_id = unit_id
        self.age = age
        super().__init__(f"duplicate observation for unit {unit_id!r} at age {age}")


class InconsistentUnit(NtdidError):
    def __init__(self, unit_id, field):
        self.unit_id = unit_id
        self.field = field
        super().__init__(f"unit {unit_id!r} has conflicting values for {field}")


class EmptyCell(NtdidError):
    def __init__(self, gender, group, age):
        self.gender = gender
        self.group = group
        self.age = age
        super().__init__(f"empty cell: gender={gender}, group={group}, age={age}")


class DegenerateDenominator(NtdidError):
    def __init__(self, what, value):
        self.what = what
        self.value = value
        super().__init__(f"degenerate denominator in {what}: {value!r}")


class InvalidWindow(NtdidError):
    pass


class MissingGroup(NtdidError):
    def __init__(self, groups):
        self.groups = sorted(groups)
        super().__init__(f"estimates missing for treatment groups: {self.groups}")


class NoDonors(NtdidError):
    pass


class TooFewUnits(NtdidError):
    pass


class DegenerateTrainingSplit(NtdidError):
    pass


class SingularDesign(NtdidError):
    pass


class NonFiniteWeight(NtdidError):
    pass


class CollinearDesign(NtdidError):
    pass


class WindowMismatch(NtdidError):
    pass


class OutOfRange(NtdidError):
    pass


class InvalidSpec(NtdidError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"invalid generator spec field {field!r}: {message}")
