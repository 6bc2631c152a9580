"""Knowledge-graph embeddings, link prediction and embedding-based entity similarity."""

__version__ = "0.1.0"

from .analytics import Projection, export_projection, pca_2d
from .evaluation import RankReport, evaluate, rank_triple
from .inference import StatementAssessment, assess_statement, batch_assess, expit
from .models import (ModelKind, ModelParams, init_params, load_checkpoint, save_checkpoint,
                     score, score_all_heads, score_all_tails, score_gradient)
from .similarity import (Fingerprint, SimilarityRow, cosine, prediction_profile, profile_mse,
                         sim_score, tanimoto, top_k_similar)
from .store import (Dictionary, FilterIndex, TripleStore, build_filter_index, export_tsv,
                    ingest_tsv, split)
from .training import TrainConfig, TrainReport, grid_search, train
