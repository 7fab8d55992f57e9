CLASS_NAMES = ("kneeApView", "kneeLatView", "tkaApView", "tkaLatView")
NUM_CLASSES = len(CLASS_NAMES)
CLASS_IDS = {name: i for i, name in enumerate(CLASS_NAMES)}
