"""Desk-scale toolkit for disrupting, fingerprinting and attributing image generators."""
from .imaging import Dataset, load_dataset, load_image, make_rng, save_dataset, save_image, synth_texture_dataset
from .spectral import DctFeatures, dct2, extract_pooled, idct2, log_spectrum
from .metrics import FeatureEmbedder, frechet_distance, l1_distance, l2_distance, psnr
from .attack import AttackConfig, evaluate_attack, pgd_disrupt, random_noise_baseline
from .watermark import (EmbedKey, FingerprintCode, FingerprintEmbedder, decode_fingerprint,
                        embed_fingerprint, epoch_sweep, verify_trigger)
from .attribution import AttributionClassifier, ConfusionMatrix, evaluate, precision_row, train_classifier

__version__ = "0.1.0"
