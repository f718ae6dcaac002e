use super::{BoundingBox, LayoutError, ObjectSpec, StructuredDesign};

/// Video frame (1-based) each keyframe is pinned to: evenly spaced over
/// `1..=total_frames`, rounded to whole frames. First anchor is 1, last is
/// `total_frames` (when there is more than one keyframe).
pub fn anchor_frames(keyframes: usize, total_frames: u32) -> Vec<u32> {
    match keyframes {
        0 => Vec::new(),
        1 => vec![1],
        k => {
            let span = f64::from(total_frames - 1);
            (0..k)
                .map(|j| 1 + (j as f64 * span / (k - 1) as f64).round() as u32)
                .collect()
        }
    }
}

/// Object boxes at video frame `frame`.
///
/// Boxes are linearly interpolated between the two surrounding anchors and
/// rounded to whole pixels. An object present in only one of the two
/// surrounding keyframes is held at that keyframe's box.
pub fn interpolate_layout(
    design: &StructuredDesign,
    frame: u32,
) -> Result<Vec<ObjectSpec>, LayoutError> {
    if frame < 1 || frame > design.total_frames {
        return Err(LayoutError::FrameOutOfRange {
            frame,
            total_frames: design.total_frames,
        });
    }
    let anchors = anchor_frames(design.keyframes.len(), design.total_frames);
    if let Some(j) = anchors.iter().position(|&a| a == frame) {
        return Ok(design.keyframes[j].objects.clone());
    }
    // Past the last anchor only happens with a single keyframe.
    let Some(seg) = anchors.windows(2).position(|w| w[0] < frame && frame < w[1]) else {
        return Ok(design.keyframes[anchors.len() - 1].objects.clone());
    };
    let (a0, a1) = (anchors[seg], anchors[seg + 1]);
    let t = f64::from(frame - a0) / f64::from(a1 - a0);
    let left = &design.keyframes[seg];
    let right = &design.keyframes[seg + 1];

    let mut out = Vec::with_capacity(left.objects.len() + right.objects.len());
    for obj in &left.objects {
        let bbox = match right.object(obj.id) {
            Some(next) => lerp_box(obj.bbox, next.bbox, t, design),
            None => obj.bbox,
        };
        out.push(ObjectSpec {
            id: obj.id,
            name: obj.name.clone(),
            bbox,
        });
    }
    for obj in &right.objects {
        if left.object(obj.id).is_none() {
            out.push(obj.clone());
        }
    }
    Ok(out)
}

fn lerp_box(a: BoundingBox, b: BoundingBox, t: f64, design: &StructuredDesign) -> BoundingBox {
    let lerp = |p: u32, q: u32| (f64::from(p) + (f64::from(q) - f64::from(p)) * t).round() as u32;
    let x = lerp(a.x, b.x);
    let y = lerp(a.y, b.y);
    // Rounding each coordinate separately can overshoot the edge by a pixel.
    let w = lerp(a.w, b.w).min(design.canvas.width - x).max(1);
    let h = lerp(a.h, b.h).min(design.canvas.height - y).max(1);
    BoundingBox { x, y, w, h }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Canvas, KeyframeLayout};

    fn car_design(xs: &[u32], total_frames: u32) -> StructuredDesign {
        let keyframes = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| KeyframeLayout {
                frame_index: i as u32 + 1,
                objects: vec![ObjectSpec::new(0, "car", BoundingBox::new(x, 350, 100, 50))],
            })
            .collect();
        StructuredDesign::new(Canvas::default(), total_frames, keyframes, "moon", "car").unwrap()
    }

    #[test]
    fn anchors_span_the_video() {
        assert_eq!(anchor_frames(6, 65), vec![1, 14, 27, 39, 52, 65]);
        assert_eq!(anchor_frames(6, 11), vec![1, 3, 5, 7, 9, 11]);
        assert_eq!(anchor_frames(1, 65), vec![1]);
    }

    #[test]
    fn midpoint_between_first_two_keyframes() {
        let d = car_design(&[400, 320, 240, 160, 80, 0], 11);
        let objs = interpolate_layout(&d, 2).unwrap();
        assert_eq!(objs[0].bbox, BoundingBox::new(360, 350, 100, 50));
    }

    #[test]
    fn anchor_frames_are_exact() {
        let d = car_design(&[400, 320, 240, 160, 80, 0], 65);
        for (kf, frame) in d.keyframes.iter().zip(anchor_frames(6, 65)) {
            assert_eq!(interpolate_layout(&d, frame).unwrap(), kf.objects);
        }
        assert_eq!(interpolate_layout(&d, 65).unwrap()[0].bbox.x, 0);
    }

    #[test]
    fn out_of_range() {
        let d = car_design(&[400, 0], 65);
        assert!(matches!(
            interpolate_layout(&d, 0),
            Err(LayoutError::FrameOutOfRange { .. })
        ));
        assert!(matches!(
            interpolate_layout(&d, 66),
            Err(LayoutError::FrameOutOfRange { .. })
        ));
    }

    #[test]
    fn one_sided_objects_are_held() {
        let mut d = car_design(&[400, 0], 5);
        d.keyframes[1]
            .objects
            .push(ObjectSpec::new(1, "tree", BoundingBox::new(10, 10, 20, 20)));
        d.guidance_scales.insert(1, 1.0);
        d.validate().unwrap();
        let objs = interpolate_layout(&d, 3).unwrap();
        assert_eq!(objs.len(), 2);
        assert_eq!(objs[0].bbox.x, 200);
        assert_eq!(objs[1].bbox, BoundingBox::new(10, 10, 20, 20));
    }

    #[test]
    fn single_keyframe_is_constant() {
        let d = car_design(&[123], 65);
        for f in [1, 30, 65] {
            assert_eq!(interpolate_layout(&d, f).unwrap()[0].bbox.x, 123);
        }
    }
}
