"""calibrag: decision calibration for retrieval-augmented pipelines.

Retrieval finds candidate documents, a forecasting head predicts the
probability that a downstream decision based on each document will be
correct, and the pipeline reranks, optionally reformulates, and hands
the best-supported document to the decision maker together with a
calibrated confidence.
"""

from .corpus import (
    Document,
    InvertedIndex,
    SearchHit,
    build_index,
    load_corpus,
    load_index,
    retrieve,
    save_index,
    tokenize,
)
from .datagen import (
    SupervisionRecord,
    SurrogateUserSpec,
    TaskPair,
    build_dataset,
    live_generate,
    load_dataset,
    load_tasks,
    sample_label,
    sample_temperature,
    save_dataset,
    true_probability,
)
from .features import ExtractorConfig, extract, hashed_features
from .forecaster import (
    ForecasterParams,
    FourierSpec,
    encode_temperature,
    init_params,
    load_model,
    marginal_confidence,
    predict,
    predict_multi,
    save_model,
    scalar_confidence,
)
from .gateway import (
    EndpointConfig,
    HttpGateway,
    MockGateway,
    PROMPTS,
    grade,
    render_prompt,
)
from .metrics import (
    auroc,
    brier,
    cumulative_accuracy_at_k,
    ece,
    nll,
    reliability_data,
)
from .pipeline import (
    DecisionTrace,
    Pipeline,
    PipelineConfig,
    PredictionRecord,
    load_predictions,
    write_predictions,
    write_traces,
)
from .training import TrainConfig, TrainingData, loss_and_grad, prepare_training_data, train

__version__ = "0.1.0"
