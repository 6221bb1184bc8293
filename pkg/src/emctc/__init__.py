"""Timestamped embedding-matching acoustic-to-word CTC at desk scale."""

from .corpus import GenSpec, Utterance, gen_corpus, read_corpus, write_corpus
from .ctc import LabelSequence, combined_loss, ctc_log_posterior
from .decoder import DecoderConfig, decode, forced_align, lattice_to_cn, overlap_gate
from .model import EncoderParams, HeadConfig, LrSchedule, encode, lr_at_step
from .scoring import EmbeddingMatrix, FrameOutput, l2_scores, multi_hyp_scores

__version__ = "0.1.0"

__all__ = [
    "DecoderConfig", "EmbeddingMatrix", "EncoderParams", "FrameOutput", "GenSpec", "HeadConfig", "LabelSequence",
    "LrSchedule", "Utterance", "combined_loss", "ctc_log_posterior", "decode", "encode", "forced_align",
    "gen_corpus", "lattice_to_cn", "l2_scores", "lr_at_step", "multi_hyp_scores", "overlap_gate", "read_corpus",
    "write_corpus",
]
