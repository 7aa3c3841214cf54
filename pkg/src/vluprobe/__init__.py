"""Zero-shot knowledge probing over text encoders behind an NDJSON protocol.

The package measures what a frozen text encoder knows about visual and
non-visual word properties (color, shape, concreteness, sentiment, facts)
through similarity-based cloze scoring, mask log-probabilities, and linear
probes over pooled embeddings, aggregating each metric over a prompt
ensemble. Model access is abstracted behind a line-oriented JSON protocol so
any encoder — in-process mock or external process — plugs in uniformly.
"""

from .errors import ProbeError, ProtocolError, ProviderError
from .probing import CandidateSet, PromptTemplate, ScoreTable, SlotPolicy
from .providers import MockProvider, ModelProvider, NliProbs, ProviderInfo
from .protocol import RemoteProvider, StdioTransport, TcpTransport, serve
from .tasks import TaskItem, TaskResult, TaskSpec, run_task

__version__ = "0.1.0"

__all__ = [
    "CandidateSet",
    "MockProvider",
    "ModelProvider",
    "NliProbs",
    "ProbeError",
    "PromptTemplate",
    "ProtocolError",
    "ProviderError",
    "ProviderInfo",
    "RemoteProvider",
    "ScoreTable",
    "SlotPolicy",
    "StdioTransport",
    "TaskItem",
    "TaskResult",
    "TaskSpec",
    "TcpTransport",
    "run_task",
    "serve",
    "__version__",
]
