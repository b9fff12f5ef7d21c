from .checkpoint import Checkpoint, checkpoint_bytes, load_checkpoint, save_checkpoint
from .decoding import (DecodeConfig, Hypothesis, beam_search, greedy, greedy_batch,
                       hypothesis_logprob, source_ids, translate)
from .model import Specials, TransformerConfig, TranslationModel, forward
from .selection import decode_corpus, select_best_checkpoint
from .training import (Batch, TrainingConfig, TrainingRun, bucket_batches, learning_rate,
                       loss_and_gradients, make_batch, token_accuracy, train)

__all__ = [
    "Batch", "Checkpoint", "DecodeConfig", "Hypothesis", "Specials", "TrainingConfig",
    "TrainingRun", "TransformerConfig", "TranslationModel", "beam_search", "bucket_batches",
    "checkpoint_bytes", "decode_corpus", "forward", "greedy", "greedy_batch",
    "hypothesis_logprob", "learning_rate", "load_checkpoint", "loss_and_gradients", "make_batch",
    "save_checkpoint", "select_best_checkpoint", "source_ids", "token_accuracy", "train",
    "translate",
]
