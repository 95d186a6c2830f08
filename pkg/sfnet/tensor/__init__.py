"""Dense tensor engine with a reverse-mode tape"""
