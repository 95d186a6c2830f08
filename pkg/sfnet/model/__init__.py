"""SF-Net backbone, PCA and checkpoints"""
