"""Federated intrusion-detection workbench.

Non-IID partitioning of flow records by destination IP, per-client
preparation, DNN and belief-network classifiers trained locally, server-side
aggregation (FedAvg, FedProx, FedYogi) with random or pretrained global
initialization, and weighted multi-class evaluation.
"""
from .data import (ClientPartition, FeatureCodec, PreparedClient, RawDataset, clean,
                   fit_apply_codec, load_flows, partition_by_dst_ip, prepare_clients,
                   stratified_split)
from .dbn import DbnStack, Rbm, cd1_update, hidden_probs, pretrain_stack, to_classifier
from .federation import (AggregationConfig, ClientUpdate, RoundReport, ServerState,
                         aggregate_fedavg, aggregate_fedyogi, pretrain_global, run_rounds)
from .metrics import (ConfusionMatrix, MetricsReport, accuracy, confusion,
                      evaluate_predictions, per_class, weighted)
from .nn import (AdamSpec, LayerSpec, ModelParams, SgdSpec, TrainConfig, backward,
                 cross_entropy, forward, init_xavier, optimizer_step, predict,
                 train_local)
from .schema import FeatureSchema, LabelIndex, TON_CLASSES, ton_iot_schema
from .synth import SkewProfile, generate, profile_ton10, residual_profile
from .store import load_checkpoint, load_prepared, save_checkpoint, save_prepared

__version__ = "0.1.0"
