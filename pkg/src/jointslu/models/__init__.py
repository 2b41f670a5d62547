"""Audio-to-intent, LAS recognizer, neural NLU, their composition and the joint model."""
from .a2i import AudioToIntent, a2i_loss, audio_to_intent_forward
from .beam import Hypothesis, LASScorer, beam_decode, beam_search, greedy_decode, las_greedy
from .joint import (OOD, Decoded, JointSLU, compose, false_accept_curve, joint_forward, joint_loss,
                    nlu_on_trace, nlu_predict, ood_filter, ood_score, ood_verdict)
from .las import LAS, EncoderOutput, attend, las_decode_teacher_forced, las_encode, las_loss
from .layers import MultiHeadAttention
from .nlu import NLU, interface_inputs, nlu_forward, nlu_loss
from .store import KINDS, Bundle, build, load, save

__all__ = [
    "AudioToIntent", "Bundle", "Decoded", "EncoderOutput", "Hypothesis", "JointSLU", "KINDS", "LAS",
    "LASScorer", "MultiHeadAttention", "NLU", "OOD", "a2i_loss", "attend",
    "audio_to_intent_forward", "beam_decode", "beam_search", "build", "compose",
    "false_accept_curve", "greedy_decode", "interface_inputs", "joint_forward", "joint_loss",
    "las_decode_teacher_forced", "las_encode", "las_greedy", "las_loss", "load", "nlu_forward",
    "nlu_loss", "nlu_on_trace", "nlu_predict", "ood_filter", "ood_score", "ood_verdict", "save",
]
