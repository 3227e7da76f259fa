import warnings

warnings.filterwarnings("ignore", message="The TBB threading layer")
