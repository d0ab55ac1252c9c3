"""Exception hierarchy shared across the package."""


class TsforgeError(Exception):
    """Base class for all package errors."""


class DataError(TsforgeError):
    """Problems with input data files or dataset construction."""


class MissingDirective(DataError):
    def __init__(self, directive: str):
        super().__init__(f"required directive '@{directive}' missing before @data")
        self.directive = directive


class MalformedLine(DataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class MalformedRow(DataError):
    def __init__(self, row_no: int, reason: str):
        super().__init__(f"row {row_no}: {reason}")
        self.row_no = row_no


class EmptyDataset(DataError):
    pass


class AllMissingSeries(DataError):
    def __init__(self, series_id: str):
        super().__init__(f"series '{series_id}' contains only missing values")
        self.series_id = series_id


class SeriesTooShort(DataError):
    def __init__(self, offenders):
        ids = ", ".join(str(s) for s in offenders)
        super().__init__(f"series shorter than 2*horizon+1: {ids}")
        self.offenders = list(offenders)


class ResolutionTooCoarse(TsforgeError):
    def __init__(self, series_id: str, kept: int):
        super().__init__(
            f"series '{series_id}': only {kept} points survive downsampling (need >= 3)"
        )
        self.series_id = series_id
        self.kept = kept


class NoAdmissibleOrigins(TsforgeError):
    pass


class LengthMismatch(TsforgeError):
    pass


class TrainTooShort(TsforgeError):
    pass


class AllUndefined(TsforgeError):
    """Every series produced an undefined metric value."""


class MissingForecast(TsforgeError):
    def __init__(self, series_id: str):
        super().__init__(f"no forecast supplied for series '{series_id}'")
        self.series_id = series_id


class EmptyHistory(TsforgeError):
    pass


class IllegalArchitecture(TsforgeError):
    """Encoder/decoder/mode combination outside the legal design table."""


class ShapeMismatch(TsforgeError):
    pass


class NotTCN(TsforgeError):
    pass


class NonFiniteLoss(TsforgeError):
    pass


class NonFiniteGradient(TsforgeError):
    pass


class Diverged(TsforgeError):
    pass


class TooFewPoints(TsforgeError):
    pass


class TooFewRuns(TsforgeError):
    pass


class ZeroVariance(TsforgeError):
    pass


class NoCandidates(TsforgeError):
    pass


class CorruptRecord(TsforgeError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"history line {line_no}: {reason}")
        self.line_no = line_no
