"""Cross-lingual MRC toolkit: mixed-language data augmentation, knowledge-phrase
masking, multi-task span-model training, and EM/F1 evaluation."""

__version__ = "0.1.0"
