"""Ensemble and ensemble-distribution distillation for sequence-to-sequence correction models."""
