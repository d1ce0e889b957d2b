use holocolor::autofocus::{estimate_z, FocusSearch};
use holocolor::field::ComplexField;
use holocolor::simulate::{forward_hologram, make_phantom, PhantomSpec, PhantomStyle};
use holocolor::Error;

fn hologram(z: f64, wl: f64) -> ComplexField {
    let ph = make_phantom(&PhantomSpec {
        size: 256,
        pitch: 0.28,
        seed: 6,
        style: PhantomStyle::Bars,
        phase_range: 0.0,
        ..Default::default()
    })
    .unwrap();
    ComplexField::from_intensity(&forward_hologram(&ph.field(wl).unwrap(), z, 1.0).unwrap(), wl).unwrap()
}

#[test]
fn finds_several_distances() {
    let search = FocusSearch::new(20.0, 200.0, 5.0, 0.25).unwrap();
    for z in [45.0, 112.5, 160.0] {
        let got = estimate_z(&hologram(z, 540.0), &search, 1.0).unwrap();
        assert!((got - z).abs() < 2.0, "{z}: {got}");
    }
}

#[test]
fn peak_at_the_window_edge_is_reported() {
    // the sharpest coarse sample is the window's lower edge, the true focus
    let search = FocusSearch::new(160.0, 200.0, 5.0, 0.25).unwrap();
    assert!(matches!(
        estimate_z(&hologram(160.0, 540.0), &search, 1.0),
        Err(Error::NoPeak { .. })
    ));
}
