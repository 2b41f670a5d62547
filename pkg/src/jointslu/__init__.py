"""Desk-scale spoken language understanding: audio-to-intent, LAS + NLU pipelines and
a jointly trained ASR/NLU model with a hidden-layer interface."""

__version__ = "0.1.0"
