from .config import LossConfig, taps_for_duration
from .sdr import f_sdr_loss, f_sdr_pair, sdr_loss, sdr_pair, si_sdr_db, si_sdr_loss, si_sdr_pair, split_speakers
from .ci_sdr import FilterEstimate, bss_eval_sdr, ci_sdr_loss, ci_sdr_pair, source_autocorrelation, wiener_hopf_filter
from .pit import best_permutation, loss_matrix, pit_wrap
from .factory import create_pair_loss, pit_loss

__all__ = [
    "LossConfig",
    "taps_for_duration",
    "f_sdr_pair",
    "sdr_pair",
    "si_sdr_pair",
    "ci_sdr_pair",
    "f_sdr_loss",
    "sdr_loss",
    "si_sdr_loss",
    "ci_sdr_loss",
    "FilterEstimate",
    "wiener_hopf_filter",
    "source_autocorrelation",
    "bss_eval_sdr",
    "si_sdr_db",
    "split_speakers",
    "pit_wrap",
    "loss_matrix",
    "best_permutation",
    "create_pair_loss",
    "pit_loss",
]
