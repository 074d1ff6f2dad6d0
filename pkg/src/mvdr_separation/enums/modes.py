from enum import Enum


class LossKind(str, Enum):
    """训练目标"""
    F_SDR = "f_sdr"
    SDR = "sdr"
    SI_SDR = "si_sdr"
    CI_SDR = "ci_sdr"

    @property
    def uses_dry_source(self) -> bool:
        """CI-SDR 以干声源为参考，其余以早期混响像为参考"""
        return self is LossKind.CI_SDR

    @property
    def stft_domain(self) -> bool:
        return self is LossKind.F_SDR


class RtfMode(str, Enum):
    """RTF 估计方式"""
    POWER_ITERATION = "power_iteration"
    EIGH = "eigh"


class WienerSolver(str, Enum):
    """Wiener-Hopf 方程求解后端"""
    TOEPLITZ_LEVINSON = "toeplitz_levinson"
    DIRECT_NORMAL_EQUATIONS = "direct_normal_equations"


class Enhancement(str, Enum):
    """源提取方式：MVDR 波束形成 或 参考通道掩蔽"""
    MVDR = "mvdr"
    MASKING = "masking"


class OverlapMode(str, Enum):
    FULL = "full"
    PARTIAL = "partial"


class MaskKind(Enum):
    """每个说话人的三种掩蔽 -> MaskSet 第 0 维索引"""
    TARGET = 0
    DISTORTION = 1
    DISTORTION_RTF = 2

    @property
    def index(self) -> int:
        return self.value
