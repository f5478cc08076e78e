use evfusion::emvs::{build_dsi, detect_local_maxima, Provenance};
use evfusion::export::{read_pfm, write_pfm};
use evfusion::pipeline::{map_view, MapParams, ViewInputs, ViewResult};
use evfusion::synth::{render_frame, simulate, PlaneScene, SynthParams, Texture};
use evfusion::{Frame, Pose, Trajectory};

struct Scene {
    params: SynthParams,
    events: Vec<evfusion::Event>,
    trajectory: Trajectory,
    frame: Frame,
    ref_pose: Pose,
}

fn scene(depth: f64, duration: f64) -> Scene {
    let params = SynthParams {
        depth,
        duration,
        ..SynthParams::default()
    };
    let cam = params.camera().unwrap();
    let synth = params.scene().unwrap();
    let events = simulate(&params, &synth, &cam).unwrap();
    let trajectory = Trajectory::new(params.poses()).unwrap();
    let ref_pose = trajectory.interpolate(duration / 2.0).unwrap();
    let frame = render_frame(&synth, &ref_pose, &cam).unwrap();
    Scene {
        params,
        events,
        trajectory,
        frame,
        ref_pose,
    }
}

fn params_for(depth: f64) -> MapParams {
    let mut p = MapParams::default();
    p.dsi.z_min = depth / 2.0;
    p.dsi.z_max = depth * 2.0;
    p
}

fn run(s: &Scene, p: &MapParams) -> ViewResult {
    let cam = s.params.camera().unwrap();
    let inputs = ViewInputs {
        events: &s.events,
        trajectory: &s.trajectory,
        cam: &cam,
        frame: &s.frame,
        ref_pose: &s.ref_pose,
    };
    map_view(&inputs, p).unwrap()
}

/// Accepted pixels of a plane textured with vertical stripes, so every
/// edge has parallax under the lateral motion.
#[test]
fn local_maxima_recover_the_plane() {
    let depth = 0.231;
    let params = SynthParams {
        duration: 2.0,
        ..SynthParams::default()
    };
    let cam = params.camera().unwrap();
    let size = 256;
    // Irregular widths avoid the repeated-pattern ambiguity of regular bars.
    let mut column = Vec::with_capacity(size);
    let (mut level, mut width) = (50.0, 7usize);
    while column.len() < size {
        column.extend(std::iter::repeat_n(level, width));
        level = 250.0 - level;
        width = 5 + (width * 7 + 3) % 17;
    }
    let data = (0..size * size).map(|i| column[i % size]).collect();
    let texture = Texture::Tiled {
        size,
        texel: depth / params.fx,
        data,
    };
    let trajectory = Trajectory::new(params.poses()).unwrap();
    let synth = PlaneScene::new(texture, depth, trajectory.clone(), params.contrast).unwrap();
    let events = simulate(&params, &synth, &cam).unwrap();
    let ref_pose = trajectory.interpolate(1.0).unwrap();

    let p = params_for(depth);
    let dsi = build_dsi(&events, &trajectory, &cam, &ref_pose, &p.dsi).unwrap();
    let map = detect_local_maxima(&dsi, &p.maxima).unwrap();
    // z* falls on a plane here; take the wider of the two gaps touching it.
    let planes = p.dsi.plane_depths();
    let spacing = planes
        .windows(2)
        .filter(|g| g[0] <= depth + 1e-12 && g[1] >= depth - 1e-12)
        .map(|g| g[1] - g[0])
        .fold(0.0, f64::max);
    let depths: Vec<f64> = map.iter_valid().map(|(_, _, d)| d).collect();
    assert!(depths.len() > 500, "only {} points", depths.len());
    let close = depths.iter().filter(|&&d| (d - depth).abs() <= spacing + 1e-12).count();
    assert!(
        close as f64 >= 0.9 * depths.len() as f64,
        "{close} of {} within {spacing} m",
        depths.len()
    );
}

#[test]
fn dense_map_contains_projected_events() {
    let s = scene(0.231, 0.5);
    let view = run(&s, &params_for(0.231));
    let ri = &view.fusion.range_image;
    assert!(view.filling.n2 >= view.filling.n1);
    assert_eq!(view.filling.n1, view.projected.len());
    assert_eq!(view.filling.n2, ri.len());
    for (i, d) in view.projected.iter() {
        assert_eq!(ri.at(i), Some((d, Provenance::Event)));
    }
    assert_eq!(view.dense_cloud.len(), ri.len());
    // Filled pixels belong to regions marked filled.
    let filled: Vec<u32> = view
        .fusion
        .decisions
        .iter()
        .filter(|d| d.filled)
        .map(|d| d.region_id)
        .collect();
    for (i, cell) in ri.cells().iter().enumerate() {
        if let Some((_, Provenance::Fill)) = cell {
            assert!(filled.contains(&view.labels.labels()[i]));
        }
    }
}

#[test]
fn map_view_rejects_mismatched_frame() {
    let s = scene(0.231, 0.2);
    let cam = s.params.camera().unwrap();
    let small = Frame::filled(0.1, 10, 10, 0);
    let inputs = ViewInputs {
        events: &s.events,
        trajectory: &s.trajectory,
        cam: &cam,
        frame: &small,
        ref_pose: &s.ref_pose,
    };
    assert!(map_view(&inputs, &MapParams::default()).is_err());
}

#[test]
fn range_image_survives_pfm() {
    let s = scene(0.231, 0.5);
    let view = run(&s, &params_for(0.231));
    let ri = &view.fusion.range_image;
    let values = evfusion::export::range_values(ri);
    let mut buf = Vec::new();
    write_pfm(&mut buf, ri.width, ri.height, &values).unwrap();
    let (w, h, back) = read_pfm(buf.as_slice()).unwrap();
    assert_eq!((w, h), (ri.width, ri.height));
    assert_eq!(back, values);
}
