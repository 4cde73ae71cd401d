"""Jump tests for high-frequency price paths, with simulators and bootstrap calibration."""
from jumplab.calibrate import BootstrapConfig, DoubleBootstrapResult, double_bootstrap_decision, lm_bootstrap_pvalue
from jumplab.errors import (
    DegeneratePath,
    DegenerateVariance,
    FlaggedFlat,
    InsufficientData,
    InvalidArgument,
    JumpLabError,
    NumericFailure,
    ParseError,
)
from jumplab.frictionless import (
    AjConfig,
    LmConfig,
    aj_test,
    cauchy_combine,
    cauchy_critical,
    cc_test,
    dense_power_curve,
    kernel_moments,
    lm_test,
)
from jumplab.model import JumpRecord, JumpTestReport, LogPricePath, MarkLaw, Method, ObservedPath, aggregate_last_tick, increments
from jumplab.noise import LaConfig, PaConfig, ccn_test, la_test, pa_test, rho_coefficients, tsrsv_spot

__version__ = "0.1.0"
