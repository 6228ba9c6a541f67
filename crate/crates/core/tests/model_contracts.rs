use gridcast_core::grid::{BeliefMass, Eogm, GridConfig, LabelVariant};
use gridcast_core::predict::model::{merge_streams, occupancy_frames, Stream};
use gridcast_core::predict::{
    prong_loss, semantic_cache, train, Architecture, Graph, Model, ModelKind, Objective, Prong, Schedule, Tensor,
    TrainConfig, Widths,
};
use gridcast_core::sim::{generate_dataset, AgentCounts, ScenarioConfig, ScenarioKind, SequenceSample};

fn scenario(kind: ScenarioKind, agents: AgentCounts) -> ScenarioConfig {
    ScenarioConfig {
        scenario: kind,
        grid: GridConfig::new(16, 16, 1.0).unwrap(),
        variant: LabelVariant::Four,
        sequences: 4,
        agents,
        ..ScenarioConfig::default()
    }
}

fn data(n: usize) -> Vec<SequenceSample> {
    generate_dataset(&scenario(ScenarioKind::MultiVehicleStraight, AgentCounts::default()), n, 3).unwrap().sequences
}

fn tiny() -> Widths {
    Widths { a: vec![4], r: vec![4, 4], kernel: 3 }
}

fn arch(kind: ModelKind) -> Architecture {
    Architecture::new(kind, GridConfig::new(16, 16, 1.0).unwrap(), LabelVariant::Four, tiny()).unwrap()
}

/// Removes the last `side` input channels of a `[out, in, k, k]` kernel.
fn drop_side(w: &Tensor<f32>, side: usize) -> Tensor<f32> {
    let s = w.shape();
    let (out, cin, kk) = (s[0], s[1], s[2] * s[3]);
    let keep = cin - side;
    let mut data = Vec::with_capacity(out * keep * kk);
    for o in 0..out {
        data.extend_from_slice(&w.data()[(o * cin) * kk..(o * cin + keep) * kk]);
    }
    Tensor::new(vec![out, keep, s[2], s[3]], data).unwrap()
}

#[test]
fn zero_side_kernels_reduce_to_occupancy_only() {
    let sem = Model::new(arch(ModelKind::Semantics), 1).unwrap();
    let mut ours = Model::ours(&sem, None, 2).unwrap();
    let side = ours.prong("occ").unwrap().config.side_channels;
    let w = ours.prong_mut("occ").unwrap().params.get_mut("r0.w").unwrap();
    let s = w.shape().to_vec();
    let kk = s[2] * s[3];
    for o in 0..s[0] {
        for c in s[1] - side..s[1] {
            for v in &mut w.data_mut()[(o * s[1] + c) * kk..(o * s[1] + c + 1) * kk] {
                *v = 0.0;
            }
        }
    }

    let occ = ours.prong("occ").unwrap();
    let mut params = occ.params.clone();
    let r0 = drop_side(params.get("r0.w").unwrap(), side);
    *params.get_mut("r0.w").unwrap() = r0;
    let pred_arch = arch(ModelKind::Prednet);
    let config = pred_arch.prongs()[0].1.clone();
    let prednet = Model::from_parts(pred_arch, vec![Prong { name: "occ".into(), config, params }]).unwrap();

    for seq in &data(2) {
        for schedule in [Schedule::Recursive { t_in: 5 }, Schedule::TeacherForced] {
            let a = ours.rollout(seq, schedule, 5, 15).unwrap().occupancy;
            let b = prednet.rollout(seq, schedule, 5, 15).unwrap().occupancy;
            assert_eq!(a, b);
        }
    }
}

#[test]
fn semantic_input_moves_the_occupancy_loss() {
    let seqs = data(4);
    let cfg = TrainConfig { epochs: 2, batch_size: 2, learning_rate: 1e-3, ..TrainConfig::default() };
    let mut sem = Model::new(arch(ModelKind::Semantics), 4).unwrap();
    train(&mut sem, &seqs, &cfg).unwrap();
    let mut ours = Model::ours(&sem, None, 5).unwrap();
    train(&mut ours, &seqs, &cfg).unwrap();

    let sides = semantic_cache(&ours, &seqs[..1], &cfg).unwrap().remove(0);
    let sides: Vec<Tensor<f64>> = sides.iter().map(|t| t.cast()).collect();
    let frames = occupancy_frames::<f64>(&seqs[0], 20, Stream::All).unwrap();
    let occ = ours.prong("occ").unwrap();
    let params = occ.params.cast::<f64>();
    let loss = |sides: &[Tensor<f64>]| {
        let mut g = Graph::new();
        let vars: Vec<_> = params.tensors().map(|t| g.constant(t.clone())).collect();
        let (l, _) = prong_loss(&mut g, &occ.config, &vars, &frames, Some(sides), Objective::NextFrame).unwrap();
        g.value(l).item()
    };

    let eps = 1e-3;
    let n = 16 * 16;
    let mut moved = 0;
    for t in [2, 5, 9] {
        for cell in [0, 100, 200] {
            let mut up = sides.clone();
            let mut down = sides.clone();
            up[t].data_mut()[n + cell] += eps;
            down[t].data_mut()[n + cell] -= eps;
            let d = (loss(&up) - loss(&down)) / (2.0 * eps);
            assert!(d.is_finite());
            if d.abs() > 1e-9 {
                moved += 1;
            }
        }
    }
    assert!(moved >= 8, "only {moved} of 9 probes changed the loss");
}

#[test]
fn static_scenes_leave_the_dynamic_stream_empty() {
    let agents = AgentCounts { vehicles: 0, cyclists: 0, pedestrians: 0, parked: 3, traffic_objects: 4 };
    let cfg = ScenarioConfig { ego_speed: Some([0.0, 0.0]), ..scenario(ScenarioKind::StaticClutter, agents) };
    let seqs = generate_dataset(&cfg, 2, 9).unwrap().sequences;
    for seq in &seqs {
        assert!(seq.frames().iter().all(|f| f.dynamic_mask.iter().all(|&m| !m)));
        let dy = occupancy_frames::<f32>(seq, 20, Stream::Dynamic).unwrap();
        assert!(dy.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        let st = occupancy_frames::<f32>(seq, 20, Stream::Static).unwrap();
        let all = occupancy_frames::<f32>(seq, 20, Stream::All).unwrap();
        assert_eq!(st, all);
    }

    let vacuous = Eogm::vacuous(*seqs[0].frames()[0].eogm.config());
    for f in seqs[0].frames() {
        assert_eq!(merge_streams(&f.eogm, &vacuous).unwrap(), f.eogm);
    }

    let model = Model::new(arch(ModelKind::DoubleProng), 6).unwrap();
    let out = model.rollout(&seqs[0], Schedule::Recursive { t_in: 5 }, 5, 15).unwrap();
    assert_eq!(out.occupancy.len(), 15);
    for e in &out.occupancy {
        assert!(e.masses().all(|m: BeliefMass| m.is_valid()));
    }
}
