"""Parameter containers shared by the transformer blocks"""
