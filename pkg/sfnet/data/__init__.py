"""Raster container, synthetic scenes, splits and patches"""
