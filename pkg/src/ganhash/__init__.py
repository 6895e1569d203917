"""Semantic hashing trained on real/synthetic triplets from a
class-conditional GAN, with Hamming-space retrieval and evaluation."""

from .data import (
    Dataset,
    ImageExample,
    load_cifar10,
    make_toy_dataset,
    split_supervised,
)
from .evaluation import (
    EvalReport,
    average_precision,
    evaluate,
    hash_lookup_precision,
    is_relevant,
    mean_average_precision,
    precision_at_k,
    precision_recall_curve,
)
from .gan import GanConfig, GanState, adversarial_loss, build_gan, discriminate, generate, pretrain_gan
from .losses import (
    StreamLosses,
    cnn_objective,
    cross_entropy_classification_loss,
    generator_objective,
    softmax_classification_loss,
    triplet_ranking_loss,
    triplet_stream_losses,
)
from .lsh import LshModel, fit_lsh, lsh_encode
from .model import HashModel, HashModelConfig, build_hash_model, embed, hash_forward
from .retrieval import (
    HashCode,
    RetrievalIndex,
    build_index,
    hamming_distance,
    lookup_within_radius,
    quantize,
    search,
)
from .trainer import TrainConfig, gradient_step, train
from .triplets import RealSyntheticTriplet, sample_triplets

__version__ = "0.1.0"
