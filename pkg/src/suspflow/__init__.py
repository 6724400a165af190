"""Time-changed suspension flows over torus translations."""
from .profiles import (
    BoundsSchedule,
    LemmaOmega,
    PowerBump,
    ProfileError,
    ThetaFamily,
    TimeProfile,
    UnitProfile,
    construct_omega,
    default_schedule,
    eval_profile,
    family_path,
)
from .flow import (
    BaseMap,
    FlowSystem,
    HermanCocycle,
    HorizonExceeded,
    PointFixedUnderSlowFlow,
    SuspensionPoint,
    base_apply,
    dist_to_p,
    fast_time,
    gamma,
    slow_advance,
    slow_time,
    suspension_advance,
)
from .analysis import (
    birkhoff_gamma_mean,
    ball_frequency_floor,
    cocycle_residual,
    first_hit_slow_time,
    hitting_sequence,
    linear_growth_constant,
    linear_rank,
    lyapunov_top,
    occupation_fraction,
)

__version__ = "0.1.0"
