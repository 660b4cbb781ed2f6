"""Approximately-finite-memory i/o maps and ReLU temporal convolutional nets."""
