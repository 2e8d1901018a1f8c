import tensorflow as tf
from tensorflow.keras import layers


def build_model() -> tf.keras.Model:
    in_ = layers.Input(shape=(28, 28, 192), name="in")
    relu1x1 = layers.Conv2D(64, (1, 1), strides=(1, 1), padding="valid", activation="relu", name="conv1x1")(in_)
    pool = layers.MaxPooling2D(pool_size=(3, 3), strides=(1, 1), padding="same", name="pool")(in_)
    relu_poolproj = layers.Conv2D(32, (1, 1), strides=(1, 1), padding="valid", activation="relu", name="poolproj")(pool)
    relu_reduce3x3 = layers.Conv2D(96, (1, 1), strides=(1, 1), padding="valid", activation="relu", name="reduce3x3")(in_)
    relu_reduce5x5 = layers.Conv2D(16, (1, 1), strides=(1, 1), padding="valid", activation="relu", name="reduce5x5")(in_)
    relu3x3 = layers.Conv2D(128, (3, 3), strides=(1, 1), padding="same", activation="relu", name="conv3x3")(relu_reduce3x3)
    relu5x5 = layers.Conv2D(32, (5, 5), strides=(1, 1), padding="same", activation="relu", name="conv5x5")(relu_reduce5x5)
    concat = layers.Concatenate(name="concat")([relu1x1, relu3x3, relu5x5, relu_poolproj])
    return tf.keras.Model(inputs=in_, outputs=concat, name="inception_block")
