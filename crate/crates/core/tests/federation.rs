mod common;

use common::{single_client, small_model, smoke_clients};
use fedstock_core::fl::{
    local_train, run_centralized, run_fl, run_local_only, run_pfl, run_pfl_finetune, AggregationPolicy, ClientState,
    FederationConfig, LocalSchedule, TrainedModel,
};
use fedstock_core::nn::{ParamSet, Partition};
use fedstock_core::rng::{stream_rng, Stream};
use fedstock_core::Error;

fn cfg(rounds: usize, epochs: usize, lr: f64) -> FederationConfig {
    FederationConfig {
        rounds,
        local_epochs: epochs,
        learning_rate: lr,
        policy: AggregationPolicy::Size,
        seed: 42,
        finetune_epochs: 1,
        grad_clip: None,
        lr_decay: 1.0,
    }
}

fn global(m: &TrainedModel) -> &ParamSet {
    match m {
        TrainedModel::Global(p) => p,
        other => panic!("expected a global model, got {other:?}"),
    }
}

fn bits_equal(a: &ParamSet, b: &ParamSet) -> bool {
    a.params().len() == b.params().len()
        && a.params().iter().zip(b.params()).all(|(p, q)| {
            p.name == q.name
                && p.value.data().iter().zip(q.value.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        })
}

#[test]
fn single_client_fl_pfl_and_centralized_agree() {
    let model = small_model();
    let clients = vec![single_client(7, 50, 1)];
    let c = cfg(3, 2, 5e-3);
    let central = run_centralized(&model, &c, &clients).unwrap();
    let fl = run_fl(&model, &c, &clients).unwrap();
    let pfl = run_pfl(&model, &c, &clients).unwrap();
    let central = global(&central.model);
    let fl = global(&fl.model);
    let pfl = pfl.model.params_for(&model, 7).unwrap().unwrap();
    assert!(central.max_abs_diff(fl) < 1e-9);
    assert!(fl.max_abs_diff(&pfl) < 1e-9);
    assert!(central.max_abs_diff(&pfl) < 1e-9);
}

#[test]
fn fl_matches_a_hand_written_round_loop() {
    let model = small_model();
    let data = single_client(0, 20, 2).train;
    let c = cfg(2, 1, 5e-3);
    let clients: Vec<ClientState> = (0..3).map(|k| ClientState::new(k, data.clone()).unwrap()).collect();
    let fed = run_fl(&model, &c, &clients).unwrap();
    let mut theta = model.init_params(&mut stream_rng(c.seed, Stream::Init, &[]));
    for r in 0..c.rounds {
        let outs: Vec<ParamSet> = (0..3)
            .map(|k| local_train(&model, k, &data, &theta, &c.schedule(r, 1)).unwrap().params)
            .collect();
        let refs: Vec<(u32, &ParamSet)> = outs.iter().enumerate().map(|(k, p)| (k as u32, p)).collect();
        theta = fedstock_core::fl::aggregate(c.policy, &refs, &[20, 20, 20]).unwrap();
    }
    assert!(bits_equal(global(&fed.model), &theta));
}

#[test]
fn identical_updates_are_a_fixed_point_each_round() {
    // one instance makes every shuffle trivial, so all updates coincide
    let model = small_model();
    let one = single_client(0, 1, 3);
    let c = cfg(3, 2, 1e-2);
    let alone = run_fl(&model, &c, std::slice::from_ref(&one)).unwrap();
    let copies: Vec<ClientState> = (0..3).map(|k| ClientState::new(k, one.train.clone()).unwrap()).collect();
    let fed = run_fl(&model, &c, &copies).unwrap();
    assert!(bits_equal(global(&alone.model), global(&fed.model)));
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let model = small_model();
    let client = single_client(0, 10, 4);
    let p = model.init_params(&mut stream_rng(1, Stream::Init, &[]));
    let out = local_train(&model, 0, &client.train, &p, &LocalSchedule { epochs: 3, learning_rate: 0.0, grad_clip: None, seed: 9, round: 0 }).unwrap();
    assert!(bits_equal(&out.params, &p));
}

#[test]
fn single_instance_single_epoch_is_one_sgd_step() {
    let model = small_model();
    let client = single_client(0, 1, 5);
    let p = model.init_params(&mut stream_rng(2, Stream::Init, &[]));
    let lr = 0.03;
    let out = local_train(&model, 0, &client.train, &p, &LocalSchedule { epochs: 1, learning_rate: lr, grad_clip: None, seed: 9, round: 0 }).unwrap();
    let mut g = p.clone();
    model.loss_and_grad(&mut g, &client.train[0]).unwrap();
    for ((before, after), grad) in p.params().iter().zip(out.params.params()).zip(g.params()) {
        for ((b, a), d) in before.value.data().iter().zip(after.value.data()).zip(grad.grad.data()) {
            assert_eq!(*a, b - lr * d, "{}", before.name);
        }
    }
    // inputs keep value semantics
    assert!(p.params().iter().all(|t| t.grad.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn loss_trace_mostly_non_increasing() {
    let model = small_model();
    let client = single_client(0, 30, 6);
    let p = model.init_params(&mut stream_rng(3, Stream::Init, &[]));
    let out = local_train(&model, 0, &client.train, &p, &LocalSchedule { epochs: 20, learning_rate: 1e-3, grad_clip: None, seed: 11, round: 0 }).unwrap();
    let pairs = out.epoch_losses.windows(2).count();
    let ok = out.epoch_losses.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(ok as f64 >= 0.9 * pairs as f64, "{:?}", out.epoch_losses);
}

#[test]
fn pfl_heads_diverge_while_body_is_shared() {
    let model = small_model();
    let base = single_client(0, 24, 7);
    let shifted = |off: f64| {
        base.train
            .iter()
            .cloned()
            .map(|mut i| {
                i.y.iter_mut().for_each(|v| *v += off);
                i
            })
            .collect::<Vec<_>>()
    };
    let clients = vec![
        ClientState::new(0, shifted(0.25)).unwrap(),
        ClientState::new(1, shifted(-0.15)).unwrap(),
    ];
    let out = run_pfl(&model, &cfg(3, 2, 1e-2), &clients).unwrap();
    let TrainedModel::Personalized { body, heads } = &out.model else { panic!() };
    assert!(heads[&0].max_abs_diff(&heads[&1]) > 1e-6);
    let a = out.model.params_for(&model, 0).unwrap().unwrap();
    let b = out.model.params_for(&model, 1).unwrap().unwrap();
    assert!(bits_equal(&a.subset(Partition::Body), body));
    assert!(bits_equal(&b.subset(Partition::Body), body));

    let audit = out.audit.as_ref().unwrap();
    assert_eq!(audit.rounds.len(), 3);
    assert!(audit.holds_only_body());
    assert!(audit.rounds.iter().flatten().all(|p| !p.contains("head.")));
    assert!(body.names().all(|n| !n.starts_with("head.")));
}

#[test]
fn diverging_client_is_excluded_and_weights_renormalize() {
    let model = small_model();
    let good = single_client(0, 10, 8);
    let mut bad_data = good.train.clone();
    bad_data[0].y[0] = 1e300;
    let clients = vec![good, ClientState::new(1, bad_data).unwrap()];
    let out = run_fl(&model, &cfg(2, 1, 1e-2), &clients).unwrap();
    for r in &out.rounds {
        assert_eq!(r.participants, vec![0]);
        assert_eq!(r.weights, vec![1.0]);
        assert_eq!(r.excluded.len(), 1);
        assert_eq!(r.excluded[0].client, 1);
    }
    let only_bad = vec![clients[1].clone()];
    assert!(matches!(
        run_fl(&model, &cfg(1, 1, 1e-2), &only_bad),
        Err(Error::Divergence { client: 1, epoch: 0 })
    ));
    assert!(matches!(
        run_centralized(&model, &cfg(1, 1, 1e-2), &only_bad),
        Err(Error::Divergence { client: 1, .. })
    ));
}

#[test]
fn local_only_clients_are_isolated() {
    let model = small_model();
    let clients = smoke_clients(9);
    let c = cfg(2, 1, 5e-3);
    let before = run_local_only(&model, &c, &clients).unwrap();
    let mut changed = clients.clone();
    let half = changed[1].train.len() / 2;
    changed[1].train.truncate(half);
    let after = run_local_only(&model, &c, &changed).unwrap();
    let (TrainedModel::PerClient(a), TrainedModel::PerClient(b)) = (&before.model, &after.model) else { panic!() };
    let (id0, id1) = (clients[0].client_id, clients[1].client_id);
    assert!(bits_equal(&a[&id0], &b[&id0]));
    assert!(a[&id1].max_abs_diff(&b[&id1]) > 0.0);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let model = small_model();
    let clients = smoke_clients(10);
    let c = cfg(2, 1, 5e-3);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            (
                run_fl(&model, &c, &clients).unwrap(),
                run_pfl(&model, &c, &clients).unwrap(),
                run_local_only(&model, &c, &clients).unwrap(),
                run_pfl_finetune(&model, &c, &clients).unwrap(),
            )
        })
    };
    let (a, b) = (run(1), run(4));
    assert!(bits_equal(global(&a.0.model), global(&b.0.model)));
    assert_eq!(a.1.model, b.1.model);
    assert_eq!(a.2.model, b.2.model);
    assert_eq!(a.3.model, b.3.model);
    for (x, y) in a.0.rounds.iter().zip(&b.0.rounds) {
        assert_eq!(x.client_losses, y.client_losses);
        assert_eq!(x.weights, y.weights);
    }
}

#[test]
fn invalid_federation_configs_are_rejected() {
    let model = small_model();
    let clients = vec![single_client(0, 3, 11)];
    for bad in [cfg(0, 1, 1e-3), cfg(1, 0, 1e-3), cfg(1, 1, 0.0), cfg(1, 1, f64::NAN)] {
        assert!(matches!(run_fl(&model, &bad, &clients), Err(Error::Config { .. })));
    }
    assert!(run_fl(&model, &cfg(1, 1, 1e-3), &[]).is_err());
    assert!(ClientState::new(3, Vec::new()).is_err());
}
