"""Space-time traffic speed field and travel time reconstruction.

Fuses loop-detector, probe-vehicle and Bluetooth travel-time data on a
uniform space-time grid and reconstructs complete speed fields with four
algorithms: section averaging, adaptive anisotropic smoothing, phase-based
smoothing, and phase-based smoothing with travel-time trust weights.
"""

from .accel import USING_NUMBA
from .asm import reconstruct_asm
from .btweight import bt_weight, bt_weight_field, parallelogram_area
from .evaluate import (
    ALGORITHMS,
    ALL_COMBINATIONS,
    DataSplit,
    ExperimentResult,
    aggregate_results,
    imae,
    mape,
    run_experiment,
    split_train_test,
    virtual_trajectory,
)
from .grid import (
    KMH,
    V_CEIL,
    V_FLOOR,
    DomainError,
    GridShapeError,
    GridSpec,
    NoDataError,
    SpeedField,
    cell_index,
    harmonic_mean,
)
from .ingest import (
    BtSample,
    FcdTrace,
    LoopRecord,
    SensorData,
    combine_cellwise,
    grid_bt,
    grid_fcd,
    grid_loop,
)
from .params import BtWeightParams, KernelParams, ReconstructionParams
from .psm import PhaseField, classify_phases, reconstruct_psm, reconstruct_psm_w
from .scenario import (
    Bottleneck,
    MovingJam,
    NoiseModel,
    ScenarioConfig,
    SensorLayout,
    desk_default,
    generate_ground_truth,
    paper_scale,
    sample_bt,
    sample_fcd,
    sample_loops,
    synthesize,
)
from .secavg import (
    SectionPartition,
    define_sections,
    reconstruct_section_average,
    section_average_loop,
    section_average_traces,
)
from .smoothing import adaptive_weight, asm_combine, directional_smooth, kernel_stencil

__version__ = "0.1.0"
