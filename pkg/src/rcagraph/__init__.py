"""Event-driven root cause analysis for recurring microservice failures.

The offline side learns per-fault-class knowledge graphs and a relational
GCN matcher from labeled historical failures; the online side builds a
propagation graph for a fresh failure, ranks fault classes by learned graph
similarity, and ranks the concrete candidate root-cause events of the best
classes by graph distance and time interval to the alarm.
"""

from .config import RunConfig
from .embedding import EmbeddingTable, SkipGramConfig, embed_type, train_embeddings
from .events import (Event, EventSequence, EventType, RawRecord, RawSource,
                     TemplateRule, abstract_event, abstract_events, load_events,
                     save_events)
from .evaluation import (EvalCase, SplitConfig, a_at_k, evaluate_variants, mar,
                         prf1, run_ablation, split)
from .fekg import (AbstractFpg, ClusterConfig, Fekg, RootInfo, abstract,
                   build_fekg_cluster, build_fekg_union, graph_clustering,
                   graph_similarity_jaccard, intersect_cluster)
from .fpg import (CandidateGraph, Fpg, FpgConfig, build_fpg, connected_components,
                  undirected_distance)
from .kernels import BACKEND
from .pipeline import Artifacts, LabeledDataset, fit_artifacts
from .ranking import (CandidateEvent, DiagnosisConfig, DiagnosisModels,
                      DiagnosisReport, RankingWeights, diagnose, rank_candidates)
from .relations import (FeatureContext, PairFeatures, RelationKind,
                        RelationModels, SvmConfig, SvmModel, classify_kind,
                        featurize, relation_exists, train_svm)
from .rgcn import (MultiGraph, RgcnSimilarityModel, SimilarityPrediction,
                   TrainConfig, graph_readout, init_similarity_model, match,
                   rgcn_forward, similarity, to_multigraph, train_similarity)
from .simulator import (FaultTemplate, GeneratedCase, PropagationRule, Topology,
                        default_catalog, default_templates, generate_dataset,
                        generate_topology)
from .stats import HistoricalStats, build_stats, correlation

__version__ = "0.1.0"
