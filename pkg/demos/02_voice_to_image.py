"""
From a sustained vowel to a 40x100 image
========================================

Synthesize a healthy and a dysphonic /a/, turn each into a normalized mel
image and compare how much energy sits between the harmonics.
"""
import numpy as np

from quanvo.data import PRESETS, synth_vowel
from quanvo.dsp import DspConfig, clip_to_image, mel_center_frequencies, mel_spectrogram

cfg = DspConfig()
print("window", cfg.stft.window_size, "hop", cfg.stft.hop_length, "mels", cfg.mel.n_mels)

for label, params in PRESETS.items():
    clip = synth_vowel(140.0, 2.0, seed=3, **params)
    db = mel_spectrogram(clip, cfg.stft, cfg.mel)  # dB, floored 80 dB below the peak
    img = clip_to_image(clip, cfg)
    print(f"\n{label}: {params}")
    print("  mel", db.shape, "-> image", img.shape, f"in [{img.min():.1f}, {img.max():.1f}]")
    # frame-to-frame variation of the loudest band: jitter and shimmer smear it
    loud = db.mean(axis=1).argmax()
    print(f"  loudest band {loud} ({mel_center_frequencies(clip.sample_rate)[loud]:.0f} Hz), "
          f"temporal std {db[loud].std():.2f} dB")
    # noise filling the gaps between harmonics lifts the typical level
    print(f"  median level {np.median(db):.1f} dB")

    # coarse picture of the image: mean brightness per band of 8 rows, low frequencies first
    rows = img[:, :, 0].reshape(5, 8, 100).mean(axis=(1, 2))
    print("  row-band brightness:", np.round(rows, 3))
