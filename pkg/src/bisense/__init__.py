"""Bi-encoder word sense disambiguation at desk scale."""

__version__ = "0.1.0"

from .lexicon import (  # noqa: F401
    LemmaKey,
    SenseEntry,
    SenseInventory,
    candidate_senses,
    first_sense,
    gloss_text,
    load_inventory,
    save_inventory,
)
from .corpus import (  # noqa: F401
    AnnotatedToken,
    Corpus,
    EvalPartition,
    Sentence,
    SenseFrequencyTable,
    build_partition,
    kshot_filter,
    load_corpus,
    save_corpus,
    sense_frequencies,
    training_mfs,
)
from .synth import SynthConfig, generate_synthetic  # noqa: F401
from .tokenizer import Vocab, build_vocab, encode, load_vocab, save_vocab  # noqa: F401
from .encoder import EncoderConfig, backward, forward, init_params, pool_cls, pool_word  # noqa: F401
from .model import (  # noqa: F401
    BiEncoderConfig,
    BiEncoderModel,
    balance_weights,
    bi_encoder_loss,
    embed_senses,
    embed_target,
    init_bi_encoder,
    linear_head_logits,
    predict,
    score_candidates,
)
from .training import TrainConfig, lr_at, train, train_kshot  # noqa: F401
from .evaluation import baseline_s1, baseline_training_mfs, run_system, score  # noqa: F401
