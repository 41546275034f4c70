from .identification import (ArmaxModel, ArxModel, FirModel, armax_identify, arx_identify, fir_identify_step,
                             fir_train, simulate_arx)
from .mitm import (AttackConfig, AttackerNode, AttackerState, CaptureEntry, CaptureLog, Direction, Mode, Strategy,
                   forge_measurement, hijack, replay_inject)

__all__ = [
    "ArmaxModel", "ArxModel", "AttackConfig", "AttackerNode", "AttackerState", "CaptureEntry", "CaptureLog",
    "Direction", "FirModel", "Mode", "Strategy", "armax_identify", "arx_identify", "fir_identify_step",
    "fir_train", "forge_measurement", "hijack", "replay_inject", "simulate_arx",
]
