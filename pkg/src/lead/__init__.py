"""EEG pipeline: preprocessing, subject-aware contrastive pre-training,
unified fine-tuning, and majority-vote subject-level detection."""

__version__ = "0.1.0"
