"""Sparse self-attention and cross-attention fusion"""
