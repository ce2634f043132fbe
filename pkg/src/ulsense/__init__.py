"""Desk-scale uplink in-band interference detection pipeline."""

from .channel import (
    InterferenceMaskSpec,
    ScenarioConfig,
    TdlProfile,
    apply_tdl,
    combine_at_receiver,
    generate_interference,
)
from .dataset import open_writer, read_batches
from .features import (
    FeatureRecord,
    PAYLOAD_BYTES,
    ScalarFeatures,
    assemble_record,
    compute_kpms,
    count_cb_errors,
    segment_tb,
)
from .grid import McsEntry, TrafficProfile, generate_tx_slot, mcs_entry, \
    qam_modulate
from .labeling import Label, TrafficLevel, classify_traffic, label_pair
from .metrics import ConfusionMatrix, evaluate, metrics
from .model import (
    InferenceSession,
    ModelConfig,
    Prediction,
    WeightBundle,
    derive_shapes,
    load_weights,
    save_weights,
    warmup,
)
from .runtime import PipelineConfig, TimingStats, run_pipeline, timing_report
from .synth import SweepSpec, generate_records, synthesize_record

__version__ = "0.1.0"
