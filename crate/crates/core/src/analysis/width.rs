use crate::network::NetworkSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidthAudit {
    /// `n_0 ..= n_L`.
    pub widths: Vec<usize>,
    /// Largest hidden width and the (first) layer attaining it.
    pub max_width: usize,
    pub arg_layer: usize,
    pub wide_enough: bool,
    /// Smallest hidden `k` with `n_{k+1} >= ... >= n_L`.
    pub pyramidal_from: Option<usize>,
}

pub fn width_audit(spec: &NetworkSpec, samples: usize) -> WidthAudit {
    let widths = spec.widths();
    let depth = spec.depth();
    let (arg_layer, max_width) = (1..depth)
        .map(|k| (k, widths[k]))
        .fold((0, 0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let pyramidal_from =
        (1..depth).find(|&k| widths[k + 1..].windows(2).all(|w| w[0] >= w[1]));
    WidthAudit {
        widths,
        max_width,
        arg_layer,
        wide_enough: max_width >= samples && max_width > 0,
        pyramidal_from,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::network::LayerSpec;

    #[test]
    fn narrow_single_layer() {
        let spec = NetworkSpec::new(
            4,
            vec![LayerSpec::dense(9, ActivationKind::Sigmoid), LayerSpec::output(1)],
        )
        .unwrap();
        let a = width_audit(&spec, 10);
        assert_eq!((a.max_width, a.arg_layer, a.wide_enough), (9, 1, false));
        assert_eq!(a.pyramidal_from, Some(1));
        assert!(width_audit(&spec, 9).wide_enough);
    }

    #[test]
    fn output_only_network_has_no_hidden_width() {
        let spec = NetworkSpec::new(4, vec![LayerSpec::output(1)]).unwrap();
        let a = width_audit(&spec, 1);
        assert_eq!((a.max_width, a.wide_enough, a.pyramidal_from), (0, false, None));
    }
}
