"""Aspect-level sentiment pipeline: three-hop rationale generation with
answer-based verification, multi-task seq2seq fine-tuning, and slice-aware
evaluation."""

__version__ = "0.1.0"
