"""
QSC Analysis.

Simulation and security analysis of quantum-noise-randomized stream ciphers:
Y-00 phase-shift keying, overlap selection keying (OSK), quantum noise
diffusion mapping (QNDM) and deliberate signal randomisation (DSR).

CLI usage::

    qsc constellation --scheme qndm --M 4 --alpha 4
    qsc analyze --scheme y00 --M 16 --alpha 4
    qsc simulate --M 1 --alpha 1.5 --slots 1e6 --seed 7
    qsc kpa --scheme qndm --M 16 --alpha 0.9 --slots 160 --seed 1

Programmatic usage::

    from qsc_analysis import TrialConfig, analyze_scenario, run_trial

    report = analyze_scenario("y00", M=16, amplitude=4.0)
    result = run_trial(TrialConfig("y00", M=16, amplitude=4.0, n_slots=10_000, master_seed=1))
"""

__version__ = "0.1.0"

from .constellation import (
    DsrConfig,
    OskConfig,
    PhasePoint,
    QndmConstellation,
    Y00Constellation,
    build_constellation,
    build_qndm,
    build_y00,
    masking_metrics,
)
from .errors import InvalidParameterError, KeyspaceTooLargeError, NumericalConsistencyError, QscError
from .kpa import KpaCurve, kpa_search, run_kpa_experiment
from .security_metrics import SecurityReport, UnicityBound, analyze_scenario, locking_report
from .simulator import TrialConfig, TrialResult, run_trial

__all__ = [
    "DsrConfig",
    "InvalidParameterError",
    "KeyspaceTooLargeError",
    "KpaCurve",
    "NumericalConsistencyError",
    "OskConfig",
    "PhasePoint",
    "QndmConstellation",
    "QscError",
    "SecurityReport",
    "TrialConfig",
    "TrialResult",
    "UnicityBound",
    "Y00Constellation",
    "analyze_scenario",
    "build_constellation",
    "build_qndm",
    "build_y00",
    "kpa_search",
    "locking_report",
    "masking_metrics",
    "run_kpa_experiment",
    "run_trial",
    "__version__",
]
