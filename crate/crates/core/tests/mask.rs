use image::{GrayImage, Luma, RgbImage};
use proptest::prelude::*;
use roadmend_core::mask::{boxes_to_mask, load_mask, BoundingBox, BoxFile, MaskError};
use roadmend_core::raster::{Dims, MaskRaster};

/// Pixel-by-pixel fill: center strictly inside the grown box on the min
/// side, before it on the max side.
fn brute_force(boxes: &[BoundingBox], dims: Dims, dilation: f64) -> MaskRaster {
    MaskRaster::from_fn(dims, |x, y| {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        boxes.iter().any(|b| {
            let (mx, my) = ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0);
            let (hw, hh) = ((b.x_max - b.x_min) * (1.0 + dilation) / 2.0, (b.y_max - b.y_min) * (1.0 + dilation) / 2.0);
            cx >= mx - hw && cx < mx + hw && cy >= my - hh && cy < my + hh
        })
    })
}

#[test]
fn interior_box_grows_ten_percent() {
    let dims = Dims::new(64, 48);
    let boxes = [BoundingBox::new(10.0, 10.0, 30.0, 30.0)];
    let m = boxes_to_mask(&boxes, dims, 0.10).unwrap();
    assert_eq!(m, brute_force(&boxes, dims, 0.10));
    let expected = MaskRaster::from_fn(dims, |x, y| {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        cx > 9.0 && cx < 31.0 && cy > 9.0 && cy < 31.0
    });
    assert_eq!(m, expected);
    assert_eq!(m.void_count(), 22 * 22);
}

#[test]
fn sidecar_json_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("boxes.json");
    std::fs::write(
        &path,
        r#"{"image": {"width": 80, "height": 60},
            "boxes": [{"x_min": 4, "y_min": 5.5, "x_max": 20, "y_max": 18, "score": 0.93, "label": "vehicle"},
                      {"x_min": 40, "y_min": 30, "x_max": 52, "y_max": 44}]}"#,
    )
    .unwrap();
    let f = BoxFile::load(&path).unwrap();
    assert_eq!(f.dims(), Dims::new(80, 60));
    assert_eq!(f.boxes.len(), 2);
    assert_eq!(f.boxes[0].confidence, 0.93);
    assert_eq!(f.boxes[1].confidence, 1.0);
    assert_eq!(f.boxes[1].label, "vehicle");
    let m = boxes_to_mask(&f.boxes, f.dims(), 0.1).unwrap();
    assert_eq!(m, brute_force(&f.boxes, f.dims(), 0.1));

    std::fs::write(&path, r#"{"boxes": []}"#).unwrap();
    assert!(matches!(BoxFile::load(&path), Err(MaskError::Read { .. })));
}

#[test]
fn invalid_boxes_are_rejected() {
    let dims = Dims::new(32, 32);
    for b in [
        BoundingBox::new(10.0, 10.0, 5.0, 20.0),
        BoundingBox::new(40.0, 0.0, 50.0, 10.0),
        BoundingBox::new(0.0, f64::NAN, 5.0, 5.0),
    ] {
        assert!(matches!(boxes_to_mask(&[b], dims, 0.1), Err(MaskError::BadBox { index: 0, .. })));
    }
    assert!(matches!(
        boxes_to_mask(&[BoundingBox::new(-1.0, -1.0, 40.0, 40.0)], dims, 0.0),
        Err(MaskError::NoKnownPixels)
    ));
    assert!(matches!(boxes_to_mask(&[], dims, 1.5), Err(MaskError::BadDilation(_))));
}

#[test]
fn mask_images() {
    let dir = tempfile::tempdir().unwrap();
    let dims = Dims::new(20, 10);
    let zero = dir.path().join("zero.png");
    GrayImage::new(20, 10).save(&zero).unwrap();
    assert_eq!(load_mask(&zero, dims).unwrap().void_count(), 0);

    let block = dir.path().join("block.png");
    GrayImage::from_fn(20, 10, |x, y| Luma([if (5..9).contains(&x) && y < 3 { 255 } else { 0 }]))
        .save(&block)
        .unwrap();
    let m = load_mask(&block, dims).unwrap();
    assert_eq!(m.void_count(), 12);
    assert!(m.is_void(5, 0) && !m.is_void(9, 0));

    assert!(matches!(
        load_mask(&block, Dims::new(10, 10)),
        Err(MaskError::DimensionMismatch { .. })
    ));
    let rgb = dir.path().join("rgb.png");
    RgbImage::new(20, 10).save(&rgb).unwrap();
    assert!(matches!(load_mask(&rgb, dims), Err(MaskError::NotSingleChannel)));
    let full = dir.path().join("full.png");
    GrayImage::from_pixel(20, 10, Luma([200])).save(&full).unwrap();
    assert!(matches!(load_mask(&full, dims), Err(MaskError::NoKnownPixels)));
}

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (-10.0f64..70.0, -10.0f64..50.0, 0.5f64..30.0, 0.5f64..30.0)
        .prop_filter("must touch the image", |(x, y, w, h)| x + w > 0.0 && y + h > 0.0 && *x < 64.0 && *y < 48.0)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h))
}

proptest! {
    #[test]
    fn matches_brute_force_fill(boxes in prop::collection::vec(arb_box(), 0..5), dilation in 0.0f64..=1.0) {
        let dims = Dims::new(64, 48);
        let want = brute_force(&boxes, dims, dilation);
        match boxes_to_mask(&boxes, dims, dilation) {
            Ok(m) => prop_assert_eq!(m, want),
            Err(MaskError::NoKnownPixels) => prop_assert_eq!(want.known_count(), 0),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn dilation_is_monotone(b in arb_box(), d1 in 0.0f64..=1.0, d2 in 0.0f64..=1.0) {
        let dims = Dims::new(64, 48);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        if let (Ok(small), Ok(big)) = (boxes_to_mask(std::slice::from_ref(&b), dims, lo), boxes_to_mask(&[b], dims, hi)) {
            for (s, g) in small.bits().iter().zip(big.bits()) {
                prop_assert!(!*s || *g);
            }
        }
    }
}
