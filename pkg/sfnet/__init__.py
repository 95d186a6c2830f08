"""SF-Net - sparse focus network for multi-source pixel classification"""
