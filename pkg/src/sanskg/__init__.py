"""Knowledge-graph embeddings with k-hop structure-aware negative sampling."""

from .evaluation import EvalReport, evaluate
from .graph import TripleStore, Vocabulary, is_observed, load_dataset
from .models import EmbeddingModel, ModelKind, init_model, load_checkpoint, save_checkpoint, score, score_gradients
from .neighborhood import (
    FillReport,
    KHopNeighborhood,
    Kind,
    build_exact_khop,
    build_rw_khop,
    extend_rw_khop,
    fill_percentage,
    load_neighborhood,
    save_neighborhood,
)
from .sampling import (
    Fallback,
    NegativeBatch,
    Sampler,
    SamplerConfig,
    Side,
    Variant,
    adversarial_weights,
    sample_sans,
    sample_uniform,
)
from .training import LossBreakdown, TrainConfig, adam_step, loss, train

__version__ = "0.1.0"
