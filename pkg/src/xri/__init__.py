"""XR-IoT broker, digital-twin sync, reality-spectrum bridge, scenario harness."""

__version__ = "0.1.0"

from .bridge import (  # noqa: F401
    CueDecision,
    CuePolicy,
    Rule,
    UserPresence,
    all_suppress_policy,
    awareness_gap,
    default_policy,
    request_transition,
    route_event,
    summarize,
)
from .broker import Broker  # noqa: F401
from .eventlog import EventLog, LogRecord, read_log  # noqa: F401
from .model import (  # noqa: F401
    ClockStamp,
    ContextEvent,
    HybridObject,
    RealityMode,
    VersionedValue,
    clock_compare,
    stamp_next,
    validate_object,
)
from .scenario import (  # noqa: F401
    Scenario,
    builtin_metaplant,
    builtin_rv_traveller,
    load_scenario,
)
from .sim import MetricsReport, RunResult, SplitMix64, compute_metrics, replay, run  # noqa: F401
from .twins import apply_write, divergence, merge_lww  # noqa: F401
from .wire import Message, decode, encode, topic_matches  # noqa: F401
