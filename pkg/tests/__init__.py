"""sfnet tests"""
