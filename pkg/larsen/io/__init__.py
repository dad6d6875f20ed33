from .audio import read_wav, write_wav
from .corpus import Corpus, SyntheticCorpus
from .manifest import RunManifest
from .tensors import read_tensor, write_tensor
