"""Care-team collaboration networks from EHR access logs.

Synthetic cohorts with planted signals, directed bipartite collaboration
graphs, GraphSAGE-style survival models with hand-verified gradients,
Shapley attribute attribution and confounder correlation checks, all
orchestrated by the ``carenet`` command-line tool.
"""

__version__ = "0.1.0"

from .synth import (  # noqa: F401
    AccessLogEvent,
    Cohort,
    HcpProfile,
    NoteProfile,
    PatientRecord,
    SynthConfig,
    generate_cohort,
    read_dataset,
    write_dataset,
)
from .graph import (  # noqa: F401
    CollabGraph,
    SimplifiedGraph,
    TimeWindows,
    build_graph,
    encode_features,
    filter_window,
    simplify_to_hcp,
    simplify_to_notes,
)
