from .modes import Enhancement, LossKind, MaskKind, OverlapMode, RtfMode, WienerSolver

__all__ = ["Enhancement", "LossKind", "MaskKind", "OverlapMode", "RtfMode", "WienerSolver"]
