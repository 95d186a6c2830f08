"""Loss, optimizer, training loop, metrics and map export"""
