use std::fs;
use std::path::Path;

use labelopt_core::io;
use labelopt_core::milp::{self, MilpConfig};
use labelopt_core::pipeline::{run_opal, OpalConfig, ProviderSpec, TruthOracle};
use labelopt_core::report::LabelSource;
use labelopt_core::splitter::SplitConfig;
use serde_json::Value;

const LABELS: [&str; 3] = ["car", "cat", "dog"];

fn write_inputs(dir: &Path, size: usize) {
    let mut data = String::from("id,truth,payload_uri\n");
    let mut a = String::from("element_id,classifier_id,label,confidence\n");
    let mut b = a.clone();
    for i in 0..size {
        let label = LABELS[i % 3];
        data.push_str(&format!("e{i:03},{label},\n"));
        a.push_str(&format!("e{i:03},vgg,{label},1.0\n"));
        b.push_str(&format!("e{i:03},vit,{label},1.0\n"));
    }
    fs::write(dir.join("d.csv"), data).unwrap();
    fs::write(dir.join("p1.csv"), a).unwrap();
    fs::write(dir.join("p2.csv"), b).unwrap();
}

#[test]
fn file_backed_run_produces_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path(), 100);
    let dataset = io::read_dataset(&dir.path().join("d.csv"), None, None).unwrap();
    let providers = ["p1.csv", "p2.csv"]
        .iter()
        .map(|f| ProviderSpec::File { path: dir.path().join(f) })
        .collect();
    let cfg = OpalConfig::new(1.0, SplitConfig::new(0.2, 7), providers);
    let report = run_opal(&dataset, &cfg, &mut TruthOracle::from_dataset(&dataset)).unwrap();
    assert_eq!(report.metrics.manual_effort, 0.2);
    assert_eq!(report.metrics.accuracy, Some(1.0));
    assert_eq!(report.count(LabelSource::Auto), 80);

    let v: Value = serde_json::from_str(&report.to_json()).unwrap();
    let a = &v["assignments"][0];
    assert!(a["id"].is_string() && a["label"].is_string() && a["source"].is_string());
    assert!(v["metrics"]["accuracy"].is_number() && v["metrics"]["manual_effort"].is_number());
    assert!(v["milp"]["status"].is_string() && v["milp"]["gap"].is_number());
    assert_eq!(v["seed"], 7);
}

#[test]
fn instance_file_round_trip_and_mps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.csv");
    fs::write(&path, "z,b,theta1,theta2\n1,1,0.9,0.8\n1,0,0.8,0.7\n1,1,0.7,0.9\n").unwrap();
    let inst = io::read_file(&path, io::read_instance).unwrap();
    assert_eq!((inst.n(), inst.m()), (2, 3));

    let mut buf = Vec::new();
    io::write_instance(&mut buf, &inst).unwrap();
    assert_eq!(io::read_instance(buf.as_slice()).unwrap(), inst);

    let model = milp::formulate(&inst, &MilpConfig::new(1.0)).unwrap();
    let parsed = milp::parse_mps(&milp::export_mps(&model)).unwrap();
    assert_eq!(parsed.num_variables(), 5);
    assert_eq!(parsed.num_constraints(), 7);
}
