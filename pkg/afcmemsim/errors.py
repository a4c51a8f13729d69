# errors.py
import enum


class ErrorCode(str, enum.Enum):
    # core_model
    NegativeRate = "NegativeRate"
    ZeroTotalLinewidth = "ZeroTotalLinewidth"
    NonPositiveFrequency = "NonPositiveFrequency"
    InvalidLinewidthOrder = "InvalidLinewidthOrder"
    NonPositiveLifetime = "NonPositiveLifetime"
    TooFewTeeth = "TooFewTeeth"
    DeltaNonPositive = "DeltaNonPositive"
    FinesseTooLow = "FinesseTooLow"
    EtaOutOfRange = "EtaOutOfRange"
    NonPositiveStep = "NonPositiveStep"
    NonFiniteSamples = "NonFiniteSamples"
    EmptyGrid = "EmptyGrid"
    # cavity_response
    NonPositiveSaturation = "NonPositiveSaturation"
    NegativePower = "NegativePower"
    PowersNotSorted = "PowersNotSorted"
    NoResonance = "NoResonance"
    # afc_prepare
    SlopesNonPositive = "SlopesNonPositive"
    DepthOutOfRange = "DepthOutOfRange"
    FmNonPositive = "FmNonPositive"
    CyclesInvalid = "CyclesInvalid"
    PumpOutsideGrid = "PumpOutsideGrid"
    CombOutsideGrid = "CombOutsideGrid"
    NegativeWait = "NegativeWait"
    NegativeField = "NegativeField"
    EmptyFieldRange = "EmptyFieldRange"
    # echo_dynamics
    CalibrationFailed = "CalibrationFailed"
    StepTooLarge = "StepTooLarge"
    NumericOverflow = "NumericOverflow"
    AliasingDetected = "AliasingDetected"
    GridMismatch = "GridMismatch"
    ModesOverrun = "ModesOverrun"
    EmptyWindow = "EmptyWindow"
    # eo_routing
    SegmentsNotIncreasing = "SegmentsNotIncreasing"
    NonFiniteVoltage = "NonFiniteVoltage"
    DuplicateChannel = "DuplicateChannel"
    NonPositiveSlope = "NonPositiveSlope"
    ChannelMismatch = "ChannelMismatch"
    PeriodTooShort = "PeriodTooShort"
    DutyOutOfRange = "DutyOutOfRange"
    # fitkit
    InsufficientData = "InsufficientData"
    NonPositiveSigma = "NonPositiveSigma"
    SingularJacobian = "SingularJacobian"
    FitDiverged = "FitDiverged"
    MaxIterations = "MaxIterations"
    UnknownModel = "UnknownModel"
    NonPositiveAmplitude = "NonPositiveAmplitude"
    # photon_stats
    NegativeCounts = "NegativeCounts"
    WindowNonPositive = "WindowNonPositive"
    InsufficientAccidentals = "InsufficientAccidentals"
    ReferenceEmpty = "ReferenceEmpty"
    VisibilityOutOfRange = "VisibilityOutOfRange"
    NonPositiveG2 = "NonPositiveG2"
    SeedRequired = "SeedRequired"
    # cli
    ConfigInvalid = "ConfigInvalid"
    DataUnreadable = "DataUnreadable"


class AfcMemError(Exception):
    """
    Error base del simulador: lleva un código estable y el código de salida
    que usa la CLI (2 configuración, 3 fallo numérico)
    """

    exit_code = 3

    def __init__(self, code: ErrorCode, message: str = ""):
        self.code = code
        self.message = message or code.value
        super().__init__(f"{code.value}: {self.message}")


class ValidationFailure(AfcMemError):
    """Violación de un invariante de un tipo de dominio"""

    exit_code = 2


class ConfigError(AfcMemError):
    exit_code = 2


class DomainError(AfcMemError):
    """Argumento fuera del dominio de una operación"""

    exit_code = 3


class NumericFailure(AfcMemError):
    exit_code = 3
