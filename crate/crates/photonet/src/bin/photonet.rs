fn main() {
    println!("photonet CLI placeholder");
}
