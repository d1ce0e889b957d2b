use holocolor::field::{Channel, HologramFrame, RealField};
use holocolor::metrics::relative_rms;
use holocolor::simulate::{
    forward_hologram, make_phantom, simulate_acquisition, translate, AcquisitionSpec, PhantomSpec, PhantomStyle,
};
use holocolor::superres::{
    channel_psr, dpsr, estimate_shifts, shift_and_add, BayerLayout, CrosstalkMatrix, FillPolicy, PsrOptions,
    ShiftTable,
};

fn scene() -> RealField {
    make_phantom(&PhantomSpec {
        size: 96,
        pitch: 0.25,
        seed: 3,
        // registration needs structure along both axes
        style: PhantomStyle::TexturedTissue,
        ..Default::default()
    })
    .unwrap()
    .transmittance(540.0)
}

fn mono_frames(scene: &RealField, factor: usize, shifts_px: &[(f64, f64)]) -> Vec<HologramFrame> {
    let (w, h) = scene.dims();
    let pitch = scene.pitch() * factor as f64;
    shifts_px
        .iter()
        .map(|&(sx, sy)| {
            let moved = translate(scene, (sx * factor as f64, sy * factor as f64));
            let lr = RealField::from_fn(w / factor, h / factor, pitch, |x, y| moved.get(x * factor, y * factor)).unwrap();
            HologramFrame::new(lr, (sx * pitch, sy * pitch), 0, Channel::Mono, vec![540.0]).unwrap()
        })
        .collect()
}

#[test]
fn estimated_shifts_reproduce_metadata_reconstruction() {
    let truth = scene();
    let grid: Vec<(f64, f64)> = (0..9).map(|k| ((k % 3) as f64 / 3.0, (k / 3) as f64 / 3.0)).collect();
    let frames = mono_frames(&truth, 3, &grid);
    let est = estimate_shifts(&frames).unwrap();
    for (got, want) in est.as_slice().iter().zip(&grid) {
        assert!((got.0 - want.0).abs() < 0.05 && (got.1 - want.1).abs() < 0.05, "{got:?} vs {want:?}");
    }
    let opts = PsrOptions::new(3).wrapping(true);
    let a = shift_and_add(&frames, &ShiftTable::from_metadata(&frames), &opts).unwrap();
    let b = shift_and_add(&frames, &est, &opts).unwrap();
    assert!(relative_rms(a.data(), b.data()) < 1e-3);
    assert!(relative_rms(truth.data(), a.data()) < 1e-12);
}

#[test]
fn sparse_raster_needs_fill_or_fails_strictly() {
    let truth = scene();
    let frames = mono_frames(&truth, 3, &[(0.0, 0.0), (1.0 / 3.0, 1.0 / 3.0)]);
    let shifts = ShiftTable::from_metadata(&frames);
    let strict = shift_and_add(&frames, &shifts, &PsrOptions::new(3).with_fill(FillPolicy::Strict));
    assert!(strict.is_err());
    let filled = shift_and_add(&frames, &shifts, &PsrOptions::new(3)).unwrap();
    assert_eq!(filled.dims(), truth.dims());
    assert!(filled.data().iter().all(|v| v.is_finite()));
}

#[test]
fn sequential_channel_psr_recovers_each_wavelength() {
    let ph = make_phantom(&PhantomSpec {
        size: 48,
        pitch: 0.28,
        seed: 9,
        style: PhantomStyle::Disks,
        ..Default::default()
    })
    .unwrap();
    for wl in [450.0, 540.0, 620.0] {
        let acq = AcquisitionSpec {
            heights: vec![40.0],
            wavelengths: vec![wl],
            raster_shifts: AcquisitionSpec::raster_grid(6, 0.28),
            sensor_pitch: 0.84,
            bayer: BayerLayout::rggb(),
            mixing: AcquisitionSpec::identity_mixing(),
            noise_sigma: 0.0,
            seed: 0,
        };
        let frames = simulate_acquisition(&ph, &acq, 1.0).unwrap();
        let shifts = ShiftTable::from_metadata(&frames);
        let ch = holocolor::superres::sequential_channel(wl);
        let hr = channel_psr(&frames, &shifts, &acq.bayer, ch, &PsrOptions::new(3).wrapping(true)).unwrap();
        let clean = forward_hologram(&ph.field(wl).unwrap(), 40.0, 1.0).unwrap();
        assert!(relative_rms(clean.data(), hr.data()) < 1e-9, "{wl} nm");
    }
}

#[test]
fn dpsr_at_factor_three_with_noise_stays_close() {
    let ph = make_phantom(&PhantomSpec {
        size: 48,
        pitch: 0.28,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let mixing = [[0.85, 0.12, 0.04], [0.10, 0.80, 0.15], [0.11, 0.78, 0.16], [0.03, 0.15, 0.82]];
    let acq = AcquisitionSpec {
        heights: vec![60.0],
        wavelengths: vec![590.0, 540.0, 450.0],
        raster_shifts: AcquisitionSpec::raster_grid(6, 0.28),
        sensor_pitch: 0.84,
        bayer: BayerLayout::rggb(),
        mixing,
        noise_sigma: 0.002,
        seed: 5,
    };
    let frames = simulate_acquisition(&ph, &acq, 1.0).unwrap();
    let w = CrosstalkMatrix::from_mixing(&mixing).unwrap();
    let (r, g, b) = dpsr(
        &frames,
        &ShiftTable::from_metadata(&frames),
        &acq.bayer,
        &w,
        &PsrOptions::new(3).wrapping(true),
    )
    .unwrap();
    for (img, wl) in [r, g, b].iter().zip([590.0, 540.0, 450.0]) {
        let clean = forward_hologram(&ph.field(wl).unwrap(), 60.0, 1.0).unwrap();
        let err = relative_rms(clean.data(), img.data());
        assert!(err < 0.02, "{wl} nm: {err}");
    }
}
