from .room import (
    RIR,
    SPEED_OF_SOUND,
    RoomSpec,
    circular_array,
    energy_decay_curve,
    image_method_rir,
    schroeder_t60,
    split_rir,
)
from .sources import synthetic_sources, synthetic_speech
from .mixture import SimulatedExample, synthesize_mixture, transfer_function_gap
from .dataset import (
    MANIFEST_NAME,
    DatasetConfig,
    generate_example,
    load_dataset,
    load_example,
    make_dataset,
    read_manifest,
    write_dataset,
)

__all__ = [
    "RoomSpec",
    "RIR",
    "SPEED_OF_SOUND",
    "circular_array",
    "image_method_rir",
    "split_rir",
    "energy_decay_curve",
    "schroeder_t60",
    "synthetic_speech",
    "synthetic_sources",
    "SimulatedExample",
    "synthesize_mixture",
    "transfer_function_gap",
    "DatasetConfig",
    "MANIFEST_NAME",
    "generate_example",
    "make_dataset",
    "write_dataset",
    "read_manifest",
    "load_example",
    "load_dataset",
]
