"""Class-factored recurrent neural network language models.

Training, sentence scoring, perplexity, n-best rescoring and text
generation, built on an explicit computation graph with reverse-mode
differentiation; no external neural network framework is required.
"""

from .architecture import (
    DescriptionError,
    LayerSpec,
    NetworkDescription,
    parse_description,
    serialize_description,
    validate_description,
)
from .classing import (
    BigramStats,
    ClassMap,
    class_bigram_loglik,
    exchange_pass,
    identity_classmap,
    initialize_classes,
    load_class_file,
    run_exchange,
    save_class_file,
)
from .graph import (
    Graph,
    GraphError,
    NonFiniteError,
    ShapeError,
    backward,
    finite_difference_check,
    forward_eval,
)
from .model_io import ModelFormatError, load_model, save_model
from .network import Network, instantiate_network
from .optimizers import OptimizerConfig, clip_gradients, make_optimizer
from .rescoring import (
    InterpolationParams,
    NBestHypothesis,
    edit_distance,
    optimize_interpolation,
    read_nbest_file,
    read_reference_file,
    rescore_nbest,
)
from .sampling import sample_text
from .scoring import ScoreResult, corpus_perplexity, score_sentence, score_sentences
from .training import TrainingConfig, TrainingState, train
from .vocabulary import Vocabulary, build_vocabulary, read_corpus

__version__ = "0.1.0"
