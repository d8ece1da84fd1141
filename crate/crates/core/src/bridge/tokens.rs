use std::ops::Range;

use serde::Serialize;

use crate::error::{shape_err, Result};
use crate::nn::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Image,
    Prompt,
    Mask,
    Text,
}

/// Token matrix `[len, token_dim]` in the fixed order image, prompt, mask,
/// text, with one role tag per row.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    pub tokens: Tensor,
    pub roles: Vec<Role>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    /// Row range of `role` (empty range if absent).
    pub fn span(&self, role: Role) -> Range<usize> {
        let start = self.roles.iter().position(|&r| r == role);
        match start {
            Some(s) => s..s + self.roles[s..].iter().take_while(|&&r| r == role).count(),
            None => {
                let at = self
                    .roles
                    .iter()
                    .take_while(|&&r| (r as u8) < (role as u8))
                    .count();
                at..at
            }
        }
    }
}

fn roles_for(lens: [usize; 4]) -> Vec<Role> {
    [Role::Image, Role::Prompt, Role::Mask, Role::Text]
        .into_iter()
        .zip(lens)
        .flat_map(|(r, n)| std::iter::repeat_n(r, n))
        .collect()
}

fn check_widths(shapes: [&[usize]; 4]) -> Result<()> {
    let width = shapes[0].get(1).copied();
    for s in shapes {
        if s.len() != 2 || Some(s[1]) != width {
            return Err(shape_err!(
                "token groups must share one width, got {shapes:?}"
            ));
        }
    }
    Ok(())
}

pub fn assemble_token_sequence(
    image: &Tensor,
    prompt: &Tensor,
    mask: &Tensor,
    text: &Tensor,
) -> Result<TokenSequence> {
    check_widths([image.shape(), prompt.shape(), mask.shape(), text.shape()])?;
    let mut data = Vec::new();
    for t in [image, prompt, mask, text] {
        data.extend_from_slice(t.data());
    }
    let lens = [image.rows(), prompt.rows(), mask.rows(), text.rows()];
    let total = lens.iter().sum();
    Ok(TokenSequence {
        tokens: Tensor::matrix(total, image.cols(), data)?,
        roles: roles_for(lens),
    })
}

/// Graph form of [`assemble_token_sequence`]; returns the sequence node and
/// its role tags.
pub fn assemble_graph(g: &mut Graph, parts: [Var; 4]) -> Result<(Var, Vec<Role>)> {
    let shapes = parts.map(|p| g.value(p).shape().to_vec());
    check_widths([&shapes[0], &shapes[1], &shapes[2], &shapes[3]])?;
    let lens = shapes.clone().map(|s| s[0]);
    let non_empty: Vec<Var> = parts
        .into_iter()
        .zip(lens)
        .filter(|(_, n)| *n > 0)
        .map(|(p, _)| p)
        .collect();
    Ok((g.concat_rows(&non_empty)?, roles_for(lens)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_and_spans() {
        let t = |n| Tensor::zeros(&[n, 32]);
        let s = assemble_token_sequence(&t(64), &t(4), &t(4), &t(8)).unwrap();
        assert_eq!(s.len(), 80);
        assert_eq!(s.span(Role::Image), 0..64);
        assert_eq!(s.span(Role::Prompt), 64..68);
        assert_eq!(s.span(Role::Mask), 68..72);
        assert_eq!(s.span(Role::Text), 72..80);
        let s = assemble_token_sequence(&t(64), &t(4), &t(4), &t(0)).unwrap();
        assert_eq!(s.len(), 72);
        assert_eq!(s.span(Role::Text), 72..72);
    }

    #[test]
    fn width_mismatch() {
        let a = Tensor::zeros(&[2, 32]);
        let b = Tensor::zeros(&[2, 16]);
        assert!(assemble_token_sequence(&a, &a, &b, &a).is_err());
    }
}
