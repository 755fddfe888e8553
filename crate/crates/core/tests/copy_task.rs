use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qrnn_core::copy_task::{
    epoch_rng, evaluate, generate_batch, pad_to_quaternions, unpad, CopyBatch, CopyTaskSpec, SequenceClassifier, BLANK,
    DELIMITER, INPUT_CHANNELS, OUTPUT_CLASSES,
};
use qrnn_core::{Quaternion, Result, Tensor};

/// Input and target index sequences written out from the layout definition.
fn brute_force(l: usize, t: usize, payload: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let total = 2 * l + t + 1;
    let mut input = Vec::new();
    let mut target = Vec::new();
    for step in 0..total {
        input.push(if step < l {
            payload[step]
        } else if step < l + t {
            BLANK
        } else if step == l + t {
            DELIMITER
        } else {
            BLANK
        });
        target.push(if step < l + t + 1 { BLANK } else { payload[step - (l + t + 1)] });
    }
    (input, target)
}

fn row_argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |best, (k, &v)| if v > row[best] { k } else { best })
}

#[test]
fn worked_example() {
    let spec = CopyTaskSpec::new(2, 3).unwrap();
    assert_eq!(spec.input_indices(&[3, 7]), vec![3, 7, 8, 8, 8, 9, 8, 8]);
    assert_eq!(spec.target_indices(&[3, 7]), vec![8, 8, 8, 8, 8, 8, 3, 7]);
    assert_eq!(CopyTaskSpec::new(10, 100).unwrap().total_steps(), 121);
}

#[test]
fn generated_batches_follow_the_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (l, t) in [(1, 0), (2, 3), (5, 1), (10, 10), (4, 25)] {
        let spec = CopyTaskSpec::new(l, t).unwrap();
        let batch = generate_batch(spec, 7, &mut rng);
        let steps = spec.total_steps();
        assert_eq!(batch.inputs.shape(), &[7, steps, INPUT_CHANNELS]);
        for (b, payload) in batch.payloads.iter().enumerate() {
            assert!(payload.iter().all(|&s| s < 8));
            let (input, target) = brute_force(l, t, payload);
            assert_eq!(&batch.targets[b * steps..(b + 1) * steps], &target[..]);
            let mut from_inputs = Vec::new();
            for (s, &expected) in input.iter().enumerate() {
                let row = &batch.inputs.data()[(b * steps + s) * INPUT_CHANNELS..(b * steps + s + 1) * INPUT_CHANNELS];
                assert_eq!(row.iter().sum::<f64>(), 1.0);
                assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
                assert_eq!(row_argmax(row), expected);
                if s < l {
                    from_inputs.push(row_argmax(row));
                }
            }
            assert_eq!(&from_inputs, payload);
            assert_eq!(&target[spec.recall_start()..], &payload[..]);
        }
    }
}

#[test]
fn same_stream_same_batch() {
    let spec = CopyTaskSpec::new(10, 10).unwrap();
    let a = generate_batch(spec, 10, &mut epoch_rng(4, 17));
    let b = generate_batch(spec, 10, &mut epoch_rng(4, 17));
    assert_eq!(a, b);
    let c = generate_batch(spec, 10, &mut epoch_rng(4, 18));
    assert_ne!(a.payloads, c.payloads);
    let d = generate_batch(spec, 10, &mut epoch_rng(5, 17));
    assert_ne!(a.payloads, d.payloads);
}

#[test]
fn padding_relayout() {
    let mut e0 = vec![0.0; INPUT_CHANNELS];
    e0[0] = 1.0;
    let q = pad_to_quaternions(&e0).unwrap();
    assert_eq!(q.n_quats(), 3);
    assert_eq!(q.get(0), Quaternion::ONE);
    assert_eq!(q.get(1), Quaternion::ZERO);
    assert_eq!(q.get(2), Quaternion::ZERO);
    for ch in 0..INPUT_CHANNELS {
        let mut v = vec![0.0; INPUT_CHANNELS];
        v[ch] = 1.0;
        let q = pad_to_quaternions(&v).unwrap();
        let expected: [f64; 4] = std::array::from_fn(|part| if part == ch / 3 { 1.0 } else { 0.0 });
        assert_eq!(q.get(ch % 3).to_array(), expected, "channel {ch}");
        assert_eq!(unpad(&q), v);
    }
    assert!(pad_to_quaternions(&[0.0; INPUT_CHANNELS]).unwrap().components().iter().all(|&c| c == 0.0));
    assert!(pad_to_quaternions(&[0.0; 9]).is_err());
}

struct AlwaysBlank;
struct Oracle;
struct Noise(u64);

fn one_hot_logits(batch: &CopyBatch, mut class_of: impl FnMut(usize) -> usize) -> Tensor {
    let (b, s) = (batch.batch_size(), batch.steps());
    let mut t = Tensor::zeros(&[b, s, OUTPUT_CLASSES]);
    for idx in 0..b * s {
        t.data_mut()[idx * OUTPUT_CLASSES + class_of(idx)] = 5.0;
    }
    t
}

impl SequenceClassifier for AlwaysBlank {
    fn logits(&self, batch: &CopyBatch) -> Result<Tensor> {
        Ok(one_hot_logits(batch, |_| BLANK))
    }
}

impl SequenceClassifier for Oracle {
    fn logits(&self, batch: &CopyBatch) -> Result<Tensor> {
        Ok(one_hot_logits(batch, |idx| batch.targets[idx]))
    }
}

impl SequenceClassifier for Noise {
    fn logits(&self, batch: &CopyBatch) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        Ok(one_hot_logits(batch, |_| rng.gen_range(0..OUTPUT_CLASSES)))
    }
}

#[test]
fn reference_classifiers() {
    let spec = CopyTaskSpec::new(10, 10).unwrap();
    let batch = generate_batch(spec, 1000, &mut ChaCha8Rng::seed_from_u64(2));

    let blank = evaluate(&AlwaysBlank, &batch).unwrap();
    assert_eq!(blank.accuracy_recall, 0.0);
    assert_eq!(blank.accuracy_full, 21.0 / 31.0);

    let perfect = evaluate(&Oracle, &batch).unwrap();
    assert_eq!(perfect.accuracy_recall, 1.0);
    assert_eq!(perfect.accuracy_full, 1.0);
    assert!(perfect.loss < blank.loss);

    let random = evaluate(&Noise(3), &batch).unwrap();
    assert!((random.accuracy_recall - 1.0 / 9.0).abs() < 0.05, "{}", random.accuracy_recall);
}
