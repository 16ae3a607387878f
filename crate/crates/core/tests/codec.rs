use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tabdp_core::codec::{
    decode, encode, fit_schema, ColumnSpec, Dataset, DeclaredKinds, EmbeddingSpace, RawTable, ScalerParams,
    TableSchema, Value,
};

fn schema() -> TableSchema {
    TableSchema::new(
        vec![
            ColumnSpec::numeric("age"),
            ColumnSpec::categorical("job", ["clerk", "nurse", "pilot", "smith"]),
            ColumnSpec::numeric("income"),
            ColumnSpec::categorical("region", ["n", "s"]),
            ColumnSpec::categorical("label", ["no", "yes"]),
        ],
        Some("label".into()),
    )
    .unwrap()
}

const JOBS: [&str; 4] = ["clerk", "nurse", "pilot", "smith"];
const REGIONS: [&str; 2] = ["n", "s"];
const LABELS: [&str; 2] = ["no", "yes"];

fn records() -> impl Strategy<Value = Vec<Vec<Value>>> {
    let row = (-1e3..1e3f64, 0usize..4, -50.0..50.0f64, 0usize..2, 0usize..2)
        .prop_map(|(a, j, i, r, l)| {
            vec![
                Value::Num(a),
                Value::Cat(JOBS[j].into()),
                Value::Num(i),
                Value::Cat(REGIONS[r].into()),
                Value::Cat(LABELS[l].into()),
            ]
        });
    prop::collection::vec(row, 2..40).prop_filter("numeric columns need spread", |rows| {
        let spread = |k: usize| {
            let v: Vec<f64> = rows.iter().map(|r| if let Value::Num(x) = r[k] { x } else { 0.0 }).collect();
            v.iter().any(|x| (x - v[0]).abs() > 1e-3)
        };
        spread(0) && spread(2)
    })
}

proptest! {
    #[test]
    fn encode_decode_round_trip(rows in records(), d_e in 1usize..4, seed in any::<u64>()) {
        let schema = schema();
        let data = Dataset::from_records(&rows, &schema).unwrap();
        let scaler = ScalerParams::fit(&data, &schema).unwrap();
        let emb = EmbeddingSpace::init(&schema, d_e, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let z = encode(&rows, &schema, &scaler, &emb).unwrap();
        prop_assert_eq!(z.width, schema.encoded_width(d_e));
        let back = decode(&z, &schema, &scaler, &emb).unwrap();
        for (orig, got) in rows.iter().zip(back.records(&schema)) {
            for (a, b) in orig.iter().zip(&got) {
                match (a, b) {
                    (Value::Num(x), Value::Num(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0)),
                    _ => prop_assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn csv_round_trip(rows in records()) {
        let schema = schema();
        let data = Dataset::from_records(&rows, &schema).unwrap();
        let mut buf = Vec::new();
        data.to_raw(&schema).to_writer(&mut buf).unwrap();
        let raw = RawTable::from_reader(buf.as_slice()).unwrap();
        let back = Dataset::from_raw(&raw, &schema).unwrap();
        prop_assert_eq!(back, data);
    }
}

#[test]
fn fitted_schema_excludes_label_from_width() {
    let raw = RawTable::from_reader(
        "age,job,label\n30,nurse,yes\n41,clerk,no\n25,nurse,no\n".as_bytes(),
    )
    .unwrap();
    let kinds = DeclaredKinds {
        numeric: vec!["age".into()],
        categorical: vec!["job".into()],
        label: Some("label".into()),
    };
    let schema = fit_schema(&raw, &kinds).unwrap();
    assert_eq!(schema.column("job").unwrap().vocab, vec!["clerk", "nurse"]);
    assert_eq!((schema.d_num(), schema.d_cat(), schema.n_classes()), (1, 1, 2));
    assert_eq!(schema.encoded_width(3), 6);
}

#[test]
fn decoded_table_has_no_vocab_violations() {
    let schema = schema();
    let emb = EmbeddingSpace::init(&schema, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let scaler = ScalerParams {
        columns: vec![
            tabdp_core::codec::ColumnScale { mean: 0.0, std: 1.0 },
            tabdp_core::codec::ColumnScale { mean: 5.0, std: 2.0 },
        ],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = tabdp_core::diffusion::standard_normal_vec(20 * emb.width(), &mut rng);
    let batch = tabdp_core::codec::EncodedBatch { width: emb.width(), data: z, labels: Some(vec![1; 20]) };
    let data = decode(&batch, &schema, &scaler, &emb).unwrap();
    let raw = data.to_raw(&schema);
    assert!(Dataset::from_raw(&raw, &schema).is_ok());
}
