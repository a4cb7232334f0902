//! Named-tensor container: magic `JCTF`, version byte, name, rank,
//! extents, then little-endian `f64` payload in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"JCTF";
pub const TENSOR_VERSION: u8 = 1;

pub fn write_tensor_to<W: Write>(out: &mut W, name: &str, tensor: &Tensor) -> std::io::Result<()> {
    out.write_all(TENSOR_MAGIC)?;
    out.write_all(&[TENSOR_VERSION])?;
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&[tensor.rank() as u8])?;
    for &d in tensor.shape() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in tensor.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one record; `Ok(None)` on a clean end of input.
pub fn read_tensor_from<R: Read>(input: &mut R) -> Result<Option<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    match read_exact_or_eof(input, &mut magic)? {
        false => return Ok(None),
        true if &magic != TENSOR_MAGIC => {
            return Err(Error::Format(format!("bad tensor magic {magic:?}")));
        }
        true => {}
    }
    let version = read_u8(input)?;
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let name_len = read_u32(input)? as usize;
    if name_len > 1 << 20 {
        return Err(Error::Format(format!("tensor name length {name_len} is implausible")));
    }
    let mut name = vec![0u8; name_len];
    fill(input, &mut name)?;
    let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
    let rank = read_u8(input)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(input)? as usize);
    }
    let count: usize = shape.iter().product();
    if count > 1 << 31 {
        return Err(Error::Format(format!("tensor {name} with extents {shape:?} is implausibly large")));
    }
    let mut bytes = vec![0u8; count * 8];
    fill(input, &mut bytes)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let tensor = Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?;
    Ok(Some((name, tensor)))
}

pub fn write_tensor(path: &Path, name: &str, tensor: &Tensor) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor_to(&mut w, name, tensor)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<(String, Tensor)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    read_tensor_from(&mut r)?.ok_or_else(|| Error::Format(format!("{}: empty tensor file", path.display())))
}

fn read_exact_or_eof<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match input.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::Format("truncated tensor header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Format(e.to_string())),
        }
    }
    Ok(true)
}

fn fill<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|_| Error::Format("truncated tensor record".into()))
}

fn read_u8<R: Read>(input: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    fill(input, &mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    fill(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roundtrip(name: &str, t: &Tensor) -> (String, Tensor) {
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, name, t).unwrap();
        read_tensor_from(&mut buf.as_slice()).unwrap().unwrap()
    }

    #[test]
    fn scalar_roundtrip() {
        let t = Tensor::scalar(-3.25);
        assert_eq!(roundtrip("s", &t), ("s".to_string(), t));
    }

    #[test]
    fn payload_size_for_2x3x4() {
        let t = Tensor::zeros(&[2, 3, 4]);
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, "abc", &t).unwrap();
        let header = 4 + 1 + 4 + 3 + 1 + 3 * 4;
        assert_eq!(buf.len() - header, 192);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, "x", &Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor_from(&mut bad.as_slice()), Err(Error::Format(_))));
        for cut in [3, 8, buf.len() - 1] {
            assert!(matches!(read_tensor_from(&mut &buf[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jctf");
        let t = Tensor::new(vec![2, 2], vec![1.0, f64::MIN_POSITIVE, -0.0, 1e300]).unwrap();
        write_tensor(&p, "w", &t).unwrap();
        let (name, back) = read_tensor(&p).unwrap();
        assert_eq!(name, "w");
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn random_tensors_roundtrip_bit_exactly(
            shape in prop::collection::vec(1usize..4, 0..4),
            seed in any::<u64>(),
            name in "[a-z._]{0,12}",
        ) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n as u64)
                .map(|i| f64::from_bits(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i.wrapping_mul(0xD1B5_4A32_D192_ED03))))
                .collect();
            let t = Tensor::new(shape, data).unwrap();
            let (back_name, back) = roundtrip(&name, &t);
            prop_assert_eq!(back_name, name);
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
